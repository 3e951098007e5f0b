use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("direction vector has near-zero norm {norm:e}")]
    DegenerateDirection { norm: f64 },

    #[error("observation weight must be positive and finite, got {0}")]
    InvalidWeight(f64),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("observation set is empty")]
    EmptyObservations,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("normal matrix is singular (condition number {condition:e})")]
    SingularNormalMatrix { condition: f64 },

    #[error("step size must be positive, got {0}")]
    StepSizeNotPositive(f64),

    #[error("non-finite iterate at iteration {iteration}")]
    NonFiniteIterate { iteration: usize },

    #[error("total least squares problem is nongeneric (|v_last| = {v_last:e})")]
    NongenericTls { v_last: f64 },

    #[error("design matrix is rank deficient (smallest singular value {sigma_min:e})")]
    RankDeficient { sigma_min: f64 },

    #[error("need at least 2 estimates, got {0}")]
    InsufficientReplicates(usize),

    #[error("invalid loss `{input}`: {reason}; expected one of l1, l2, block-l2, huber:t=<v>, huber-norm:t=<v>, block-huber:t=<v>, sq")]
    InvalidLoss { input: String, reason: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
