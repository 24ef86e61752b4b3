//! The trial runner: dispatches a configured algorithm against the toy
//! domain, records metrics, and writes the run artifacts.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::archive::GridArchive;
use crate::baselines::{
    run_cma_es_baseline, run_map_elites, CmaEsBaselineConfig, MapElitesConfig,
};
use crate::benchmarks::{Evaluation, ToyDomain};
use crate::emitters::{run_cma_me, CmaMeConfig, RunStats};
use crate::harness::config::{Algorithm, ExperimentConfig};
use crate::harness::metrics::{MetricsRecorder, MetricsSnapshot, TimingMode};
use crate::{QdError, SearchPoint};

/// Runtime knobs that never change what a trial computes, only how.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Evaluate batches on the rayon thread pool. Results are applied in
    /// submission order either way, so outputs are identical to sequential.
    pub parallel: bool,
    /// Write zeros to the wall-time column for byte-reproducible files.
    pub fixed_timing: bool,
    /// Also dump elite search points alongside the archive CSV.
    pub dump_genomes: bool,
}

/// Evaluates a batch of points, in parallel when requested. Results are in
/// input order regardless of execution order; each evaluation is pure.
pub fn evaluate_batch(domain: &ToyDomain, points: &[SearchPoint], parallel: bool) -> Vec<Evaluation> {
    if parallel {
        points.par_iter().map(|p| domain.evaluate(p)).collect()
    } else {
        points.iter().map(|p| domain.evaluate(p)).collect()
    }
}

/// Everything a finished trial produced.
#[derive(Debug)]
pub struct TrialResult {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub evaluations: u64,
    pub qd_score: f64,
    pub coverage: f64,
    pub max_fitness: f64,
    /// Raw objective value of the best solution seen (infinite when the
    /// budget was zero).
    pub best_raw: f64,
    pub cells_occupied: u64,
    /// Evaluations flagged non-finite and excluded from insertion.
    pub flagged: u64,
    pub snapshots: Vec<MetricsSnapshot>,
    pub archive: GridArchive,
}

#[derive(Serialize)]
struct SummaryJson<'a> {
    algorithm: &'a str,
    function: &'a str,
    dim: usize,
    evaluations: u64,
    seed: u64,
    qd_score: f64,
    coverage: f64,
    max_fitness: f64,
    cells_occupied: u64,
    config: &'a ExperimentConfig,
}

/// Runs one seeded trial of the configured algorithm and, when the config
/// names an output directory, writes `metrics.csv`, `summary.json`, and
/// `archive.csv` (plus `genomes.txt` on request) into it.
pub fn run_trial(config: &ExperimentConfig, options: &RunOptions) -> Result<TrialResult, QdError> {
    config.validate()?;
    let domain = ToyDomain::new(config.function, config.dim);
    let mut archive = GridArchive::new(domain.behavior_bounds(config.resolution));
    let timing = if options.fixed_timing {
        TimingMode::Fixed
    } else {
        TimingMode::Measured
    };
    let mut recorder = MetricsRecorder::new(config.snapshot_interval, timing);

    let parallel = options.parallel;
    let stats = dispatch(config, &domain, &mut archive, &mut recorder, parallel);
    recorder.finalize(stats.evaluations, &archive);
    debug_assert_eq!(stats.evaluations, config.evaluations);

    let result = TrialResult {
        config: config.clone(),
        seed: config.seed,
        evaluations: stats.evaluations,
        qd_score: archive.qd_score(),
        coverage: archive.coverage(),
        max_fitness: recorder.max_fitness(),
        best_raw: recorder.best_raw(),
        cells_occupied: archive.len() as u64,
        flagged: stats.flagged,
        snapshots: recorder.snapshots().to_vec(),
        archive,
    };

    if let Some(dir) = &config.output_dir {
        write_artifacts(dir, &result, &recorder, options.dump_genomes)?;
    }
    Ok(result)
}

fn dispatch(
    config: &ExperimentConfig,
    domain: &ToyDomain,
    archive: &mut GridArchive,
    recorder: &mut MetricsRecorder,
    parallel: bool,
) -> RunStats {
    let eval_batch = |points: &[SearchPoint]| evaluate_batch(domain, points, parallel);
    let observe =
        |evals: u64, eval: &Evaluation, archive: &GridArchive| recorder.observe(evals, eval, archive);

    match config.algorithm {
        Algorithm::CmaEs => {
            let cfg = CmaEsBaselineConfig::new(config.lambda, config.sigma0, config.evaluations);
            run_cma_es_baseline(&cfg, config.dim, eval_batch, archive, config.seed, observe)
        }
        Algorithm::MapElites | Algorithm::MeLine => {
            let cfg = MapElitesConfig {
                sigma: config.sigma0,
                initial_population: config.initial_population,
                line_sigma: config.line_sigma,
                ..Default::default()
            };
            run_map_elites(
                &cfg,
                config.algorithm == Algorithm::MeLine,
                config.dim,
                config.evaluations,
                eval_batch,
                archive,
                config.seed,
                observe,
            )
        }
        Algorithm::CmaMeOpt | Algorithm::CmaMeRd | Algorithm::CmaMeImp => {
            let cfg = CmaMeConfig {
                kind: config.algorithm.emitter_kind().expect("cma-me algorithm"),
                emitter_count: config.emitter_count,
                lambda: config.lambda,
                sigma0: config.sigma0,
                evaluations: config.evaluations,
            };
            run_cma_me(&cfg, config.dim, eval_batch, archive, config.seed, observe)
        }
    }
}

fn write_artifacts(
    dir: &Path,
    result: &TrialResult,
    recorder: &MetricsRecorder,
    dump_genomes: bool,
) -> Result<(), QdError> {
    fs::create_dir_all(dir)?;

    let mut metrics = Vec::new();
    recorder.write_csv(&mut metrics)?;
    fs::write(dir.join("metrics.csv"), metrics)?;

    let summary = SummaryJson {
        algorithm: result.config.algorithm.name(),
        function: result.config.function.name(),
        dim: result.config.dim,
        evaluations: result.evaluations,
        seed: result.seed,
        qd_score: result.qd_score,
        coverage: result.coverage,
        max_fitness: result.max_fitness,
        cells_occupied: result.cells_occupied,
        config: &result.config,
    };
    let mut summary_file = fs::File::create(dir.join("summary.json"))?;
    serde_json::to_writer_pretty(&mut summary_file, &summary)
        .map_err(|e| QdError::Io(e.into()))?;
    summary_file.write_all(b"\n")?;

    let mut archive_csv = Vec::new();
    result.archive.write_csv(&mut archive_csv)?;
    fs::write(dir.join("archive.csv"), archive_csv)?;

    if dump_genomes {
        let mut genomes = Vec::new();
        result.archive.write_genomes(&mut genomes)?;
        fs::write(dir.join("genomes.txt"), genomes)?;
    }
    Ok(())
}
