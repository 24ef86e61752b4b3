//! Baseline algorithms sharing the archive and evaluation plumbing:
//! MAP-Elites with isotropic Gaussian mutation, the line-mutation variant,
//! and plain CMA-ES scored through a pseudo-archive.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::archive::{Elite, GridArchive, InsertResult};
use crate::benchmarks::Evaluation;
use crate::cmaes::{CmaParams, CmaState};
use crate::emitters::RunStats;
use crate::SearchPoint;

/// MAP-Elites parameters.
#[derive(Debug, Clone)]
pub struct MapElitesConfig {
    /// Mutation power: scale of the isotropic Gaussian perturbation.
    pub sigma: f64,
    /// Uniform random solutions drawn before perturbation-based search begins.
    pub initial_population: usize,
    /// Per-dimension interval for uniform bootstrap sampling.
    pub bootstrap_range: (f64, f64),
    /// Directional scale of the line-mutation operator.
    pub line_sigma: f64,
}

impl Default for MapElitesConfig {
    fn default() -> Self {
        Self {
            sigma: 0.5,
            initial_population: 100,
            bootstrap_range: (-5.12, 5.12),
            line_sigma: 0.2,
        }
    }
}

fn bootstrap_candidate<R: Rng>(cfg: &MapElitesConfig, dim: usize, rng: &mut R) -> SearchPoint {
    let (lo, hi) = cfg.bootstrap_range;
    (0..dim).map(|_| rng.random_range(lo..=hi)).collect()
}

fn isotropic_candidate<R: Rng>(parent: &[f64], sigma: f64, rng: &mut R) -> SearchPoint {
    parent
        .iter()
        .map(|x| x + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Line-mutation candidate: `x + sigma1 * N(0, I) + sigma2 * (y - x) * N(0, 1)`.
/// The directional term vanishes when `x == y` or `sigma2 == 0`.
pub fn line_candidate<R: Rng>(
    x: &[f64],
    y: &[f64],
    sigma1: f64,
    sigma2: f64,
    rng: &mut R,
) -> SearchPoint {
    let isotropic: Vec<f64> = (0..x.len())
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let directional: f64 = rng.sample(StandardNormal);
    x.iter()
        .zip(y)
        .zip(&isotropic)
        .map(|((xi, yi), ni)| xi + sigma1 * ni + sigma2 * (yi - xi) * directional)
        .collect()
}

/// One MAP-Elites iteration: perturb a uniformly chosen elite with Gaussian
/// noise (or draw uniformly from the bootstrap range while bootstrapping or
/// when the archive is empty), evaluate, and offer the result to the archive.
pub fn map_elites_step<R: Rng>(
    archive: &mut GridArchive,
    cfg: &MapElitesConfig,
    dim: usize,
    evaluate: impl FnOnce(&[f64]) -> Evaluation,
    rng: &mut R,
    bootstrap: bool,
) -> (SearchPoint, Evaluation, InsertResult) {
    let candidate = if bootstrap || archive.is_empty() {
        bootstrap_candidate(cfg, dim, rng)
    } else {
        let parent = archive.random_elite(rng).expect("archive checked non-empty");
        isotropic_candidate(&parent.point, cfg.sigma, rng)
    };
    let eval = evaluate(&candidate);
    let result = insert_if_finite(archive, &candidate, &eval);
    (candidate, eval, result)
}

/// One line-mutation iteration: recombine two distinct elites along their
/// connecting direction. Falls back to the isotropic step while fewer than
/// two cells are occupied.
pub fn me_line_step<R: Rng>(
    archive: &mut GridArchive,
    cfg: &MapElitesConfig,
    dim: usize,
    evaluate: impl FnOnce(&[f64]) -> Evaluation,
    rng: &mut R,
    bootstrap: bool,
) -> (SearchPoint, Evaluation, InsertResult) {
    if bootstrap || archive.len() < 2 {
        return map_elites_step(archive, cfg, dim, evaluate, rng, bootstrap);
    }
    let (x, y) = archive
        .random_elite_pair(rng)
        .expect("archive checked to hold two elites");
    let candidate = line_candidate(&x.point, &y.point, cfg.sigma, cfg.line_sigma, rng);
    let eval = evaluate(&candidate);
    let result = insert_if_finite(archive, &candidate, &eval);
    (candidate, eval, result)
}

fn insert_if_finite(
    archive: &mut GridArchive,
    candidate: &[f64],
    eval: &Evaluation,
) -> InsertResult {
    if !eval.is_finite() {
        return InsertResult::Rejected;
    }
    archive.try_insert(Elite {
        point: candidate.to_vec(),
        behavior: eval.behavior.clone(),
        raw_fitness: eval.raw,
        fitness: eval.fitness,
    })
}

/// Runs MAP-Elites (or its line-mutation variant) for a fixed evaluation
/// budget. Candidates are generated one at a time because each one depends on
/// the archive state left by the previous insertion.
#[allow(clippy::too_many_arguments)]
pub fn run_map_elites(
    cfg: &MapElitesConfig,
    line_variant: bool,
    dim: usize,
    evaluations: u64,
    mut evaluate_batch: impl FnMut(&[SearchPoint]) -> Vec<Evaluation>,
    archive: &mut GridArchive,
    seed: u64,
    mut on_eval: impl FnMut(u64, &Evaluation, &GridArchive),
) -> RunStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = RunStats::default();
    for i in 0..evaluations {
        let bootstrap = i < cfg.initial_population as u64;
        let evaluate = |p: &[f64]| {
            evaluate_batch(std::slice::from_ref(&p.to_vec()))
                .pop()
                .expect("batch of one")
        };
        let (_, eval, _) = if line_variant {
            me_line_step(archive, cfg, dim, evaluate, &mut rng, bootstrap)
        } else {
            map_elites_step(archive, cfg, dim, evaluate, &mut rng, bootstrap)
        };
        stats.evaluations += 1;
        if !eval.is_finite() {
            stats.flagged += 1;
        }
        on_eval(stats.evaluations, &eval, archive);
    }
    stats
}

/// Plain CMA-ES baseline parameters.
#[derive(Debug, Clone)]
pub struct CmaEsBaselineConfig {
    pub lambda: usize,
    pub sigma0: f64,
    pub evaluations: u64,
    /// Generations without meaningful best-fitness improvement before a
    /// restart from the best solution found so far.
    pub patience: usize,
    /// Raw-objective decrease below this does not count as improvement.
    pub improvement_tolerance: f64,
}

impl CmaEsBaselineConfig {
    pub fn new(lambda: usize, sigma0: f64, evaluations: u64) -> Self {
        Self {
            lambda,
            sigma0,
            evaluations,
            patience: 50,
            improvement_tolerance: 1e-12,
        }
    }
}

/// Standard CMA-ES loop: sample a generation, rank everything by objective
/// value, adapt, and restart from the best solution so far when the search
/// stalls or degenerates. Every evaluated solution is also offered to the
/// pseudo-archive, which scores the run but never influences the search.
pub fn run_cma_es_baseline(
    cfg: &CmaEsBaselineConfig,
    dim: usize,
    mut evaluate_batch: impl FnMut(&[SearchPoint]) -> Vec<Evaluation>,
    pseudo_archive: &mut GridArchive,
    seed: u64,
    mut on_eval: impl FnMut(u64, &Evaluation, &GridArchive),
) -> RunStats {
    let params = CmaParams::new(dim, cfg.lambda);
    let mut state = CmaState::new(vec![0.0; dim], cfg.sigma0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = RunStats::default();
    let mut best: Option<(f64, SearchPoint)> = None;
    let mut history: Vec<bool> = Vec::new();

    while stats.evaluations < cfg.evaluations {
        let batch = (cfg.evaluations - stats.evaluations).min(cfg.lambda as u64) as usize;
        let points = match state.sample(batch, &mut rng) {
            Ok(points) => points,
            Err(_) => {
                restart_from_best(&mut state, &best, dim, cfg.sigma0);
                history.clear();
                stats.restarts += 1;
                state.sample(batch, &mut rng).expect("fresh state samples")
            }
        };
        let results = evaluate_batch(&points);
        debug_assert_eq!(results.len(), points.len());

        let best_before = best.as_ref().map(|(raw, _)| *raw);
        for (point, eval) in points.iter().zip(&results) {
            stats.evaluations += 1;
            if eval.is_finite() {
                pseudo_archive.try_insert(Elite {
                    point: point.clone(),
                    behavior: eval.behavior.clone(),
                    raw_fitness: eval.raw,
                    fitness: eval.fitness,
                });
                if best.as_ref().is_none_or(|(raw, _)| eval.raw < *raw) {
                    best = Some((eval.raw, point.clone()));
                }
            } else {
                stats.flagged += 1;
            }
            on_eval(stats.evaluations, eval, pseudo_archive);
        }

        if batch < cfg.lambda {
            break; // budget exhausted mid-generation; no final update
        }

        // Rank the whole generation by raw objective, ascending (equivalent
        // to normalized fitness descending); ties keep sample order.
        let mut order: Vec<usize> = (0..points.len())
            .filter(|&i| results[i].is_finite())
            .collect();
        if order.is_empty() {
            restart_from_best(&mut state, &best, dim, cfg.sigma0);
            history.clear();
            stats.restarts += 1;
            continue;
        }
        order.sort_by(|&a, &b| {
            results[a]
                .raw
                .partial_cmp(&results[b].raw)
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let parents: Vec<SearchPoint> = order
            .iter()
            .take(params.mu)
            .map(|&i| points[i].clone())
            .collect();
        state.update(&params, &parents).expect("non-empty parents");

        let improved = match (best_before, best.as_ref()) {
            (None, Some(_)) => true,
            (Some(before), Some((now, _))) => *now < before - cfg.improvement_tolerance,
            _ => false,
        };
        history.push(improved);
        if history.len() > cfg.patience {
            let excess = history.len() - cfg.patience;
            history.drain(..excess);
        }
        if state.should_restart(&history, cfg.patience) {
            restart_from_best(&mut state, &best, dim, cfg.sigma0);
            history.clear();
            stats.restarts += 1;
        }
    }
    stats
}

fn restart_from_best(
    state: &mut CmaState,
    best: &Option<(f64, SearchPoint)>,
    dim: usize,
    sigma0: f64,
) {
    match best {
        Some((_, point)) => state.reset(point, sigma0),
        None => state.reset(&vec![0.0; dim], sigma0),
    }
}
