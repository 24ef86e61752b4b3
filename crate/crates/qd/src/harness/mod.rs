//! Experiment orchestration: configuration, the trial runner, metrics
//! logging, suite aggregation, and batch evaluation dispatch.

mod config;
mod metrics;
mod runner;
mod suite;

pub use config::{load_suite_config, Algorithm, ExperimentConfig};
pub use metrics::{MetricsRecorder, MetricsSnapshot, TimingMode};
pub use runner::{evaluate_batch, run_trial, RunOptions, TrialResult};
pub use suite::{render_table, run_suite, SuiteRow};
