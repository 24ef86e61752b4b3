//! Multi-config, multi-trial comparison runs with a Table-style report.

use std::fmt::Write;
use std::fs;
use std::path::Path;

use crate::harness::config::ExperimentConfig;
use crate::harness::runner::{run_trial, RunOptions, TrialResult};
use crate::QdError;

/// Aggregated results for one configuration across its trials.
#[derive(Debug, Clone)]
pub struct SuiteRow {
    pub algorithm: String,
    pub function: String,
    pub dim: usize,
    pub trials_requested: u32,
    pub trials_completed: u32,
    pub mean_max_fitness: f64,
    /// Mean occupied-cell percentage (0..100).
    pub mean_cells_occupied_pct: f64,
    pub mean_qd_score: f64,
    /// First failure message, when any trial failed.
    pub error: Option<String>,
}

/// Runs every configuration for its requested number of trials (trial `t`
/// uses `seed + t`) and aggregates per-config means. A failing trial is
/// recorded on its row and the suite continues. With an output directory,
/// each trial writes its artifacts to
/// `<out>/<algorithm>_<function>_n<dim>_seed<seed>/` and the suite writes
/// `suite_results.csv` and `suite_results.txt`.
pub fn run_suite(
    configs: &[ExperimentConfig],
    out_dir: Option<&Path>,
    options: &RunOptions,
) -> Result<Vec<SuiteRow>, QdError> {
    if configs.is_empty() {
        return Err(QdError::InvalidConfig("suite has no configurations".into()));
    }
    let mut rows = Vec::with_capacity(configs.len());
    for config in configs {
        let mut completed: Vec<TrialResult> = Vec::new();
        let mut error = None;
        for trial in 0..config.trials {
            let mut trial_config = config.clone();
            trial_config.seed = config.seed + trial as u64;
            trial_config.output_dir = out_dir.map(|dir| {
                dir.join(format!(
                    "{}_{}_n{}_seed{}",
                    config.algorithm.name(),
                    config.function.name(),
                    config.dim,
                    trial_config.seed
                ))
            });
            match run_trial(&trial_config, options) {
                Ok(result) => completed.push(result),
                Err(e) => {
                    if error.is_none() {
                        error = Some(e.to_string());
                    }
                }
            }
        }
        rows.push(aggregate(config, &completed, error));
    }

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("suite_results.csv"), render_csv(&rows))?;
        fs::write(dir.join("suite_results.txt"), render_table(&rows))?;
    }
    Ok(rows)
}

fn aggregate(config: &ExperimentConfig, trials: &[TrialResult], error: Option<String>) -> SuiteRow {
    let n = trials.len() as f64;
    let mean = |f: &dyn Fn(&TrialResult) -> f64| {
        if trials.is_empty() {
            f64::NAN
        } else {
            trials.iter().map(|t| f(t)).sum::<f64>() / n
        }
    };
    SuiteRow {
        algorithm: config.algorithm.name().to_string(),
        function: config.function.name().to_string(),
        dim: config.dim,
        trials_requested: config.trials,
        trials_completed: trials.len() as u32,
        mean_max_fitness: mean(&|t| t.max_fitness),
        mean_cells_occupied_pct: mean(&|t| t.coverage * 100.0),
        mean_qd_score: mean(&|t| t.qd_score),
        error,
    }
}

fn render_csv(rows: &[SuiteRow]) -> String {
    let mut out = String::from(
        "algorithm,function,dim,trials,mean_max_fitness,mean_cells_occupied_pct,mean_qd_score,error\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}/{},{},{},{},{}\n",
            r.algorithm,
            r.function,
            r.dim,
            r.trials_completed,
            r.trials_requested,
            r.mean_max_fitness,
            r.mean_cells_occupied_pct,
            r.mean_qd_score,
            r.error.as_deref().unwrap_or("")
        ));
    }
    out
}

/// Plain-text table in the usual benchmark layout: one row per algorithm,
/// columns for max fitness, occupied cells, and QD-score.
pub fn render_table(rows: &[SuiteRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:<10} {:>5} {:>8} {:>13} {:>16} {:>14}",
        "algorithm", "function", "dim", "trials", "max_fitness", "cells_occupied_%", "qd_score"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<12} {:<10} {:>5} {:>5}/{:<2} {:>13.3} {:>16.2} {:>14.1}",
            r.algorithm,
            r.function,
            r.dim,
            r.trials_completed,
            r.trials_requested,
            r.mean_max_fitness,
            r.mean_cells_occupied_pct,
            r.mean_qd_score
        );
        if let Some(err) = &r.error {
            let _ = writeln!(out, "    failed trials: {err}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::ObjectiveFunction;
    use crate::harness::config::Algorithm;

    fn quick(algorithm: Algorithm, trials: u32, seed: u64) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(algorithm, ObjectiveFunction::Sphere, 6, 400);
        cfg.resolution = 30;
        cfg.lambda = 8;
        cfg.emitter_count = 2;
        cfg.snapshot_interval = 100;
        cfg.trials = trials;
        cfg.seed = seed;
        cfg
    }

    #[test]
    fn single_trial_row_equals_trial_summary() {
        let cfg = quick(Algorithm::MapElites, 1, 3);
        let direct = run_trial(&cfg, &RunOptions::default()).unwrap();
        let rows = run_suite(std::slice::from_ref(&cfg), None, &RunOptions::default()).unwrap();
        assert_eq!(rows.len(), 1);
        let row = &rows[0];
        assert_eq!(row.trials_completed, 1);
        assert_eq!(row.mean_qd_score, direct.qd_score);
        assert_eq!(row.mean_max_fitness, direct.max_fitness);
        assert_eq!(row.mean_cells_occupied_pct, direct.coverage * 100.0);
    }

    #[test]
    fn two_seeds_average_by_hand() {
        let cfg = quick(Algorithm::CmaMeImp, 2, 10);
        let mut a = cfg.clone();
        a.seed = 10;
        let mut b = cfg.clone();
        b.seed = 11;
        let ra = run_trial(&a, &RunOptions::default()).unwrap();
        let rb = run_trial(&b, &RunOptions::default()).unwrap();
        let rows = run_suite(std::slice::from_ref(&cfg), None, &RunOptions::default()).unwrap();
        let row = &rows[0];
        assert_eq!(row.trials_completed, 2);
        assert!((row.mean_qd_score - (ra.qd_score + rb.qd_score) / 2.0).abs() < 1e-9);
        assert!(
            (row.mean_max_fitness - (ra.max_fitness + rb.max_fitness) / 2.0).abs() < 1e-12
        );
    }

    #[test]
    fn failures_are_recorded_and_suite_continues() {
        let mut bad = quick(Algorithm::CmaEs, 1, 0);
        bad.dim = 1; // invalid: projection needs two halves
        let good = quick(Algorithm::MapElites, 1, 0);
        let rows = run_suite(&[bad, good], None, &RunOptions::default()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].trials_completed, 0);
        assert!(rows[0].error.as_deref().unwrap().contains("dim"));
        assert_eq!(rows[1].trials_completed, 1);
        assert!(rows[1].error.is_none());
    }

    #[test]
    fn suite_writes_reports() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = quick(Algorithm::MeLine, 1, 2);
        run_suite(
            std::slice::from_ref(&cfg),
            Some(dir.path()),
            &RunOptions::default(),
        )
        .unwrap();
        let csv = std::fs::read_to_string(dir.path().join("suite_results.csv")).unwrap();
        assert!(csv.starts_with("algorithm,function,dim,"));
        assert!(csv.contains("meline"));
        let txt = std::fs::read_to_string(dir.path().join("suite_results.txt")).unwrap();
        assert!(txt.contains("qd_score"));
        assert!(dir.path().join("meline_sphere_n6_seed2/metrics.csv").exists());
    }
}
