//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A problem parameter violates its precondition (e.g. a non-positive weight).
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// An (agent, time-step, coordinate) triple falls outside the problem layout.
    #[error("index out of range: agent {agent}, t={t}, k={k} (T={horizon}, dx={dx}, dy={dy})")]
    IndexOutOfRange {
        agent: u8,
        t: usize,
        k: usize,
        horizon: usize,
        dx: usize,
        dy: usize,
    },

    /// An evaluator produced a non-finite value while probing coordinate `coordinate`.
    #[error("non-finite evaluation while perturbing coordinate {coordinate}")]
    Evaluation { coordinate: usize },

    /// A matrix that is required to be symmetric is not.
    #[error("contract violation: matrix is not symmetric (max asymmetry {max_asymmetry:e})")]
    NotSymmetric { max_asymmetry: f64 },

    /// Power-set enumeration requested beyond the 2^16 bound.
    #[error("power-set family requires T <= 16, got T={horizon}")]
    Capacity { horizon: usize },

    /// Every time-set has an empty solution set; the coordination problem is undefined.
    #[error("infeasible coordination instance: every time-set has an empty solution set")]
    InfeasibleInstance,

    /// An internal solver invariant failed; carries a human-readable description.
    #[error("solver failure: {0}")]
    SolverFailure(String),

    /// A pipeline stage failed; wraps the underlying error with the stage name.
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    /// Run configuration is invalid.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
