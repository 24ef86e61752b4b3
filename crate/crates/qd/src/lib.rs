//! Quality-diversity optimization over continuous search spaces.
//!
//! The central algorithm is CMA-ME: a population of modified CMA-ES
//! instances ("emitters") that share a single MAP-Elites grid archive and
//! adapt their sampling distributions from archive feedback. Three emitter
//! variants are provided (optimizing, random-direction, improvement),
//! alongside MAP-Elites, line-mutation MAP-Elites, and plain CMA-ES
//! baselines, plus a benchmark harness for the linear-projection
//! sphere/Rastrigin domain with seeded, reproducible runs and CSV/JSON
//! metrics output.

pub mod archive;
pub mod baselines;
pub mod benchmarks;
pub mod cmaes;
pub mod emitters;
pub mod harness;

/// An n-dimensional point in the unbounded search space.
pub type SearchPoint = Vec<f64>;

/// A k-dimensional location in behavior space (k = 2 for the toy domain).
pub type BehaviorDescriptor = Vec<f64>;

/// Errors surfaced by the library.
#[derive(Debug, thiserror::Error)]
pub enum QdError {
    /// An operation that needs at least one elite was called on an empty archive.
    #[error("archive is empty")]
    EmptyArchive,
    /// The sampling distribution is unusable; the caller must reset the state.
    #[error("restart required: {0}")]
    RestartRequired(String),
    /// `update` was called with an empty parent list.
    #[error("cannot update from an empty parent list; restart instead")]
    NoParents,
    /// A configuration field failed validation.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("failed to parse suite config: {0}")]
    ConfigParse(String),
}
