use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: expected length {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("invalid interval set: {0}")]
    InvalidSet(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("problem too large: {0}")]
    TooLarge(String),

    #[error("covariance matrix is not positive definite")]
    IllConditioned,

    #[error("infeasible tuning request: {reason} (best grid value {grid_minimum})")]
    Infeasible { reason: String, grid_minimum: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
