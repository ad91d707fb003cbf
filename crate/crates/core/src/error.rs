use thiserror::Error;

/// Errors raised across the coreset MCMC library.
#[derive(Debug, Error)]
pub enum CoresetError {
    #[error("observation index {index} out of range for {len} observations")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("negative weight {value} at position {position}")]
    NegativeWeight { position: usize, value: f64 },
    #[error("dataset error: {0}")]
    Data(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("non-finite gradient entry at position {0}")]
    NonFiniteGradient(usize),
    #[error("weights diverged: max |w| = {0:e}")]
    Divergence(f64),
    #[error("non-finite log density at chain {chain}")]
    NonFiniteLogDensity { chain: usize },
    #[error("model does not support this operation: {0}")]
    Unsupported(&'static str),
    #[error("singular covariance after regularization")]
    SingularCovariance,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = CoresetError> = std::result::Result<T, E>;
