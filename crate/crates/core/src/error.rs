use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// The residual evaluation budget ran out. Carries the best point seen so far.
    #[error("evaluation budget of {budget} residual evaluations exhausted")]
    BudgetExhausted {
        budget: usize,
        best: Option<(Vec<f64>, f64)>,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("simulation failed at t = {t} s, grid point {j}: {reason}")]
    Simulation { t: f64, j: usize, reason: String },

    #[error("observation set is empty")]
    EmptyObservations,

    #[error("line search exceeded {0} halvings")]
    Stalled(usize),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
