//! CMA-ME: a population of modified CMA-ES instances ("emitters") sharing one
//! grid archive, coordinated by a least-generated-first scheduler.
//!
//! All emitter kinds generate solutions identically, by sampling their own
//! `N(m, sigma^2 C)`. They differ in how they rank a generation when adapting
//! the distribution and in when they restart:
//!
//! * Optimizing: ranks all solutions purely by fitness, like plain CMA-ES,
//!   but restarts from a randomly chosen elite instead of the best solution
//!   found so far.
//! * Random direction: picks a random unit direction in behavior space at
//!   each restart and ranks archive-improving solutions by how far their
//!   behaviors advance along that direction, relative to the generation's
//!   mean behavior.
//! * Improvement: ranks archive-improving solutions by their archive gain,
//!   with new-cell discoveries ranked ahead of replacements.
//!
//! Each emitter owns an independent RNG stream, which keeps runs reproducible
//! when evaluation batches are computed in parallel.

use std::cmp::Ordering;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::archive::{Elite, GridArchive};
use crate::benchmarks::Evaluation;
use crate::cmaes::{CmaParams, CmaState, DEFAULT_RESTART_PATIENCE};
use crate::{BehaviorDescriptor, SearchPoint};

/// The three emitter variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmitterKind {
    Optimizing,
    RandomDirection,
    Improvement,
}

/// A solution kept for the next distribution update.
#[derive(Debug, Clone)]
pub struct ParentRecord {
    pub point: SearchPoint,
    pub behavior: BehaviorDescriptor,
    pub fitness: f64,
    /// Archive gain: full fitness for a new cell, fitness difference for a
    /// replacement.
    pub delta: f64,
    pub new_cell: bool,
}

/// Improvement-emitter ranking: the new-cell group first, sorted by fitness
/// descending, then the improved group sorted by archive gain descending.
/// Ties keep sample order (stable sort).
pub fn rank_improvement_parents(parents: &mut [ParentRecord]) {
    parents.sort_by(|a, b| {
        b.new_cell.cmp(&a.new_cell).then_with(|| {
            let key_a = if a.new_cell { a.fitness } else { a.delta };
            let key_b = if b.new_cell { b.fitness } else { b.delta };
            key_b.partial_cmp(&key_a).unwrap_or(Ordering::Equal)
        })
    });
}

/// Random-direction ranking: projection of each behavior, relative to the
/// generation's mean behavior, onto the bias direction; descending. Ties keep
/// sample order.
pub fn rank_projection_parents(
    parents: &mut [ParentRecord],
    mean_behavior: &[f64],
    bias: &[f64],
) {
    let projection = |r: &ParentRecord| -> f64 {
        r.behavior
            .iter()
            .zip(mean_behavior)
            .zip(bias)
            .map(|((b, m), v)| (b - m) * v)
            .sum()
    };
    parents.sort_by(|a, b| {
        projection(b)
            .partial_cmp(&projection(a))
            .unwrap_or(Ordering::Equal)
    });
}

/// One modified CMA-ES instance driving part of the search.
#[derive(Debug, Clone)]
pub struct Emitter {
    kind: EmitterKind,
    cma: CmaState,
    params: CmaParams,
    sigma0: f64,
    behavior_dim: usize,
    /// Archive-improving solutions buffered for the next update.
    parents: Vec<ParentRecord>,
    /// All finite solutions of the generation (optimizing ranks these).
    generation_points: Vec<(SearchPoint, f64)>,
    /// Behaviors of all finite solutions of the generation (random-direction
    /// computes its mean behavior from these).
    generation_behaviors: Vec<BehaviorDescriptor>,
    /// Unit direction in behavior space; random-direction only.
    bias: Option<BehaviorDescriptor>,
    generated_count: u64,
    sampled_in_generation: usize,
    returned_in_generation: usize,
    improved_in_generation: bool,
    improvement_history: Vec<bool>,
    restarts: u64,
    flagged: u64,
    rng: ChaCha8Rng,
}

impl Emitter {
    /// Creates an emitter with its mean at the origin and an independent RNG
    /// stream derived from `seed`.
    pub fn new(
        kind: EmitterKind,
        dim: usize,
        behavior_dim: usize,
        lambda: usize,
        sigma0: f64,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bias = match kind {
            EmitterKind::RandomDirection => Some(random_unit_vector(behavior_dim, &mut rng)),
            _ => None,
        };
        Self {
            kind,
            cma: CmaState::new(vec![0.0; dim], sigma0),
            params: CmaParams::new(dim, lambda),
            sigma0,
            behavior_dim,
            parents: Vec::new(),
            generation_points: Vec::new(),
            generation_behaviors: Vec::new(),
            bias,
            generated_count: 0,
            sampled_in_generation: 0,
            returned_in_generation: 0,
            improved_in_generation: false,
            improvement_history: Vec::new(),
            restarts: 0,
            flagged: 0,
            rng,
        }
    }

    pub fn kind(&self) -> EmitterKind {
        self.kind
    }

    /// Lifetime number of solutions this emitter has produced.
    pub fn generated_count(&self) -> u64 {
        self.generated_count
    }

    pub fn sampled_in_generation(&self) -> usize {
        self.sampled_in_generation
    }

    pub fn restarts(&self) -> u64 {
        self.restarts
    }

    pub fn flagged(&self) -> u64 {
        self.flagged
    }

    pub fn bias(&self) -> Option<&BehaviorDescriptor> {
        self.bias.as_ref()
    }

    pub fn cma(&self) -> &CmaState {
        &self.cma
    }

    /// Draws one solution from the emitter's current distribution. Generation
    /// is identical for every emitter kind. If the distribution has gone
    /// degenerate the emitter restarts from a random elite (or the origin on
    /// an empty archive) and samples from the fresh state.
    pub fn generate_solution(&mut self, archive: &GridArchive) -> SearchPoint {
        debug_assert!(
            self.sampled_in_generation < self.params.lambda,
            "generation already fully sampled; return solutions first"
        );
        let point = match self.cma.sample_one(&mut self.rng) {
            Ok(p) => p,
            Err(_) => {
                self.restart(archive);
                self.cma
                    .sample_one(&mut self.rng)
                    .expect("freshly reset state always samples")
            }
        };
        self.generated_count += 1;
        self.sampled_in_generation += 1;
        point
    }

    /// Hands an evaluated solution back to the emitter: inserts it into the
    /// shared archive, buffers whatever this emitter kind needs, and adapts or
    /// restarts once all `lambda` solutions of the generation have come back.
    /// Solutions of one generation may be evaluated in a batch: sample them
    /// all, then return them in sample order.
    pub fn return_solution(
        &mut self,
        point: SearchPoint,
        eval: &Evaluation,
        archive: &mut GridArchive,
    ) {
        debug_assert!(
            self.returned_in_generation < self.sampled_in_generation,
            "return without a matching generate"
        );
        self.returned_in_generation += 1;
        if eval.is_finite() {
            let result = archive.try_insert(Elite {
                point: point.clone(),
                behavior: eval.behavior.clone(),
                raw_fitness: eval.raw,
                fitness: eval.fitness,
            });
            if result.accepted() {
                self.improved_in_generation = true;
                self.parents.push(ParentRecord {
                    point: point.clone(),
                    behavior: eval.behavior.clone(),
                    fitness: eval.fitness,
                    delta: result.delta(),
                    new_cell: result.new_cell(),
                });
            }
            self.generation_points.push((point, eval.fitness));
            self.generation_behaviors.push(eval.behavior.clone());
        } else {
            self.flagged += 1;
        }

        if self.returned_in_generation == self.params.lambda {
            self.end_generation(archive);
        }
    }

    fn end_generation(&mut self, archive: &mut GridArchive) {
        match self.kind {
            EmitterKind::Improvement => self.adapt_improvement(archive),
            EmitterKind::RandomDirection => self.adapt_random_direction(archive),
            EmitterKind::Optimizing => self.adapt_optimizing(archive),
        }
    }

    fn adapt_improvement(&mut self, archive: &mut GridArchive) {
        if self.parents.is_empty() {
            self.restart(archive);
            return;
        }
        rank_improvement_parents(&mut self.parents);
        let ranked: Vec<SearchPoint> = self.parents.iter().map(|r| r.point.clone()).collect();
        self.cma
            .update(&self.params, &ranked)
            .expect("parent list is non-empty");
        self.clear_generation();
    }

    fn adapt_random_direction(&mut self, archive: &mut GridArchive) {
        if self.parents.is_empty() || self.generation_behaviors.is_empty() {
            self.restart(archive);
            return;
        }
        let mut mean_behavior = vec![0.0; self.behavior_dim];
        for b in &self.generation_behaviors {
            for (m, v) in mean_behavior.iter_mut().zip(b) {
                *m += v;
            }
        }
        let count = self.generation_behaviors.len() as f64;
        for m in mean_behavior.iter_mut() {
            *m /= count;
        }
        let bias = self.bias.as_ref().expect("random-direction emitter has a bias");
        rank_projection_parents(&mut self.parents, &mean_behavior, bias);
        let ranked: Vec<SearchPoint> = self.parents.iter().map(|r| r.point.clone()).collect();
        self.cma
            .update(&self.params, &ranked)
            .expect("parent list is non-empty");
        self.clear_generation();
    }

    fn adapt_optimizing(&mut self, archive: &mut GridArchive) {
        if self.generation_points.is_empty() {
            self.restart(archive);
            return;
        }
        // Pure fitness ranking over the whole generation, whether or not the
        // archive improved; ties keep sample order.
        let mut order: Vec<usize> = (0..self.generation_points.len()).collect();
        order.sort_by(|&a, &b| {
            self.generation_points[b]
                .1
                .partial_cmp(&self.generation_points[a].1)
                .unwrap_or(Ordering::Equal)
        });
        let ranked: Vec<SearchPoint> = order
            .iter()
            .take(self.params.mu)
            .map(|&i| self.generation_points[i].0.clone())
            .collect();
        self.cma
            .update(&self.params, &ranked)
            .expect("generation is non-empty");

        self.improvement_history.push(self.improved_in_generation);
        let len = self.improvement_history.len();
        if len > DEFAULT_RESTART_PATIENCE {
            self.improvement_history
                .drain(..len - DEFAULT_RESTART_PATIENCE);
        }
        if self
            .cma
            .should_restart(&self.improvement_history, DEFAULT_RESTART_PATIENCE)
        {
            self.restart(archive);
        } else {
            self.clear_generation();
        }
    }

    /// Re-seeds the distribution at a randomly chosen elite (the origin when
    /// the archive is still empty). Random-direction emitters also draw a
    /// fresh bias direction.
    fn restart(&mut self, archive: &GridArchive) {
        let mean = match archive.random_elite(&mut self.rng) {
            Ok(elite) => elite.point.clone(),
            Err(_) => vec![0.0; self.cma.dim()],
        };
        self.cma.reset(&mean, self.sigma0);
        if self.kind == EmitterKind::RandomDirection {
            self.bias = Some(random_unit_vector(self.behavior_dim, &mut self.rng));
        }
        self.improvement_history.clear();
        self.restarts += 1;
        self.clear_generation();
    }

    fn clear_generation(&mut self) {
        self.parents.clear();
        self.generation_points.clear();
        self.generation_behaviors.clear();
        self.sampled_in_generation = 0;
        self.returned_in_generation = 0;
        self.improved_in_generation = false;
    }
}

fn random_unit_vector<R: Rng>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Round-robin coordinator: always dispatches to the emitter that has
/// generated the fewest solutions, breaking ties by list position.
#[derive(Debug)]
pub struct Scheduler {
    emitters: Vec<Emitter>,
}

impl Scheduler {
    pub fn new(emitters: Vec<Emitter>) -> Self {
        assert!(!emitters.is_empty(), "scheduler needs at least one emitter");
        Self { emitters }
    }

    /// Index of the emitter with minimal `generated_count`; ties go to the
    /// lowest index.
    pub fn select_emitter(&self) -> usize {
        self.emitters
            .iter()
            .enumerate()
            .min_by_key(|(_, e)| e.generated_count())
            .map(|(i, _)| i)
            .expect("non-empty emitter list")
    }

    pub fn emitters(&self) -> &[Emitter] {
        &self.emitters
    }

    pub fn emitter_mut(&mut self, idx: usize) -> &mut Emitter {
        &mut self.emitters[idx]
    }
}

/// Configuration for one CMA-ME run.
#[derive(Debug, Clone)]
pub struct CmaMeConfig {
    pub kind: EmitterKind,
    pub emitter_count: usize,
    pub lambda: usize,
    pub sigma0: f64,
    pub evaluations: u64,
}

/// Counters reported by a run loop.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunStats {
    pub evaluations: u64,
    /// Evaluations with non-finite results, excluded from insertion.
    pub flagged: u64,
    pub restarts: u64,
}

/// Runs CMA-ME for `cfg.evaluations` solutions against a shared archive.
///
/// Emitters are seeded from `seed` with independent streams. Solutions are
/// generated in scheduler rounds; `evaluate_batch` must return results in
/// input order (it may compute them in parallel), and insertions and
/// adaptations are then applied in sample order, so runs are reproducible
/// regardless of evaluation parallelism. `on_eval` observes every evaluation
/// in order, after its insertion was applied.
pub fn run_cma_me(
    cfg: &CmaMeConfig,
    dim: usize,
    mut evaluate_batch: impl FnMut(&[SearchPoint]) -> Vec<Evaluation>,
    archive: &mut GridArchive,
    seed: u64,
    mut on_eval: impl FnMut(u64, &Evaluation, &GridArchive),
) -> RunStats {
    assert!(cfg.emitter_count >= 1, "need at least one emitter");
    let behavior_dim = archive.bounds().k();
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let emitters: Vec<Emitter> = (0..cfg.emitter_count)
        .map(|_| {
            Emitter::new(
                cfg.kind,
                dim,
                behavior_dim,
                cfg.lambda,
                cfg.sigma0,
                master.next_u64(),
            )
        })
        .collect();
    let mut scheduler = Scheduler::new(emitters);

    let mut evals = 0u64;
    while evals < cfg.evaluations {
        let round = (cfg.evaluations - evals).min(cfg.emitter_count as u64) as usize;
        let mut picked = Vec::with_capacity(round);
        let mut points = Vec::with_capacity(round);
        for _ in 0..round {
            let idx = scheduler.select_emitter();
            let point = scheduler.emitter_mut(idx).generate_solution(archive);
            picked.push(idx);
            points.push(point);
        }
        let results = evaluate_batch(&points);
        debug_assert_eq!(results.len(), points.len());
        for ((idx, point), eval) in picked.into_iter().zip(points).zip(&results) {
            evals += 1;
            scheduler.emitter_mut(idx).return_solution(point, eval, archive);
            on_eval(evals, eval, archive);
        }
    }

    RunStats {
        evaluations: evals,
        flagged: scheduler.emitters().iter().map(|e| e.flagged()).sum(),
        restarts: scheduler.emitters().iter().map(|e| e.restarts()).sum(),
    }
}
