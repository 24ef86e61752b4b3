//! Experiment configuration and the suite file format.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::benchmarks::ObjectiveFunction;
use crate::emitters::EmitterKind;
use crate::QdError;

/// Which search algorithm a trial runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum Algorithm {
    #[serde(rename = "cmaes")]
    #[value(name = "cmaes")]
    CmaEs,
    #[serde(rename = "mapelites")]
    #[value(name = "mapelites")]
    MapElites,
    #[serde(rename = "meline")]
    #[value(name = "meline")]
    MeLine,
    #[serde(rename = "cmame-opt")]
    #[value(name = "cmame-opt")]
    CmaMeOpt,
    #[serde(rename = "cmame-rd")]
    #[value(name = "cmame-rd")]
    CmaMeRd,
    #[serde(rename = "cmame-imp")]
    #[value(name = "cmame-imp")]
    CmaMeImp,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::CmaEs => "cmaes",
            Algorithm::MapElites => "mapelites",
            Algorithm::MeLine => "meline",
            Algorithm::CmaMeOpt => "cmame-opt",
            Algorithm::CmaMeRd => "cmame-rd",
            Algorithm::CmaMeImp => "cmame-imp",
        }
    }

    /// The emitter variant behind a CMA-ME algorithm, if this is one.
    pub fn emitter_kind(&self) -> Option<EmitterKind> {
        match self {
            Algorithm::CmaMeOpt => Some(EmitterKind::Optimizing),
            Algorithm::CmaMeRd => Some(EmitterKind::RandomDirection),
            Algorithm::CmaMeImp => Some(EmitterKind::Improvement),
            _ => None,
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn default_resolution() -> usize {
    100
}
fn default_sigma0() -> f64 {
    0.5
}
fn default_emitter_count() -> usize {
    15
}
fn default_lambda() -> usize {
    37
}
fn default_snapshot_interval() -> u64 {
    1000
}
fn default_trials() -> u32 {
    1
}
fn default_initial_population() -> usize {
    100
}
fn default_line_sigma() -> f64 {
    0.2
}

/// Everything that determines a trial. The seed fully determines the run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub function: ObjectiveFunction,
    pub dim: usize,
    pub evaluations: u64,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default = "default_sigma0")]
    pub sigma0: f64,
    /// Emitter count for the CMA-ME algorithms; ignored by baselines.
    #[serde(default = "default_emitter_count")]
    pub emitter_count: usize,
    /// Population size per generation (per emitter for CMA-ME).
    #[serde(default = "default_lambda")]
    pub lambda: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_snapshot_interval")]
    pub snapshot_interval: u64,
    #[serde(default = "default_trials")]
    pub trials: u32,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Uniform bootstrap draws before MAP-Elites perturbation starts.
    #[serde(default = "default_initial_population")]
    pub initial_population: usize,
    /// Directional scale of the line-mutation operator.
    #[serde(default = "default_line_sigma")]
    pub line_sigma: f64,
}

impl ExperimentConfig {
    pub fn new(algorithm: Algorithm, function: ObjectiveFunction, dim: usize, evaluations: u64) -> Self {
        Self {
            algorithm,
            function,
            dim,
            evaluations,
            resolution: default_resolution(),
            sigma0: default_sigma0(),
            emitter_count: default_emitter_count(),
            lambda: default_lambda(),
            seed: 0,
            snapshot_interval: default_snapshot_interval(),
            trials: default_trials(),
            output_dir: None,
            initial_population: default_initial_population(),
            line_sigma: default_line_sigma(),
        }
    }

    /// Field-by-field validation with a diagnosis naming the offending field.
    pub fn validate(&self) -> Result<(), QdError> {
        if self.dim < 2 {
            return Err(QdError::InvalidConfig(format!(
                "dim must be at least 2 (the behavior projection splits the \
                 coordinates in half), got {}",
                self.dim
            )));
        }
        if self.resolution < 1 {
            return Err(QdError::InvalidConfig("resolution must be at least 1".into()));
        }
        if !(self.sigma0 > 0.0) {
            return Err(QdError::InvalidConfig(format!(
                "sigma0 must be positive, got {}",
                self.sigma0
            )));
        }
        if self.lambda < 1 {
            return Err(QdError::InvalidConfig("lambda must be at least 1".into()));
        }
        if self.emitter_count < 1 {
            return Err(QdError::InvalidConfig("emitter_count must be at least 1".into()));
        }
        if self.snapshot_interval < 1 {
            return Err(QdError::InvalidConfig("snapshot_interval must be at least 1".into()));
        }
        if self.trials < 1 {
            return Err(QdError::InvalidConfig("trials must be at least 1".into()));
        }
        if self.line_sigma < 0.0 {
            return Err(QdError::InvalidConfig(format!(
                "line_sigma must be non-negative, got {}",
                self.line_sigma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SuiteFile {
    #[serde(rename = "experiments")]
    experiments: Vec<ExperimentConfig>,
}

/// Loads a suite description: a TOML file with one `[[experiments]]` table
/// per configuration (see the repository README for the schema).
pub fn load_suite_config(path: &Path) -> Result<Vec<ExperimentConfig>, QdError> {
    let text = std::fs::read_to_string(path)?;
    let parsed: SuiteFile =
        toml::from_str(&text).map_err(|e| QdError::ConfigParse(e.to_string()))?;
    if parsed.experiments.is_empty() {
        return Err(QdError::ConfigParse(
            "suite file declares no experiments".into(),
        ));
    }
    for cfg in &parsed.experiments {
        cfg.validate()?;
    }
    Ok(parsed.experiments)
}
