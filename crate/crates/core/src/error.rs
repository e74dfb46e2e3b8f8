use thiserror::Error;

/// Errors produced by model construction, sampling and diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("dimension {dim} exceeds materialization cap {cap}")]
    CapacityExceeded { dim: usize, cap: usize },

    #[error("Cholesky pivot {pivot:e} at index {index} below tolerance (matrix not positive definite)")]
    Factorization { index: usize, pivot: f64 },

    #[error("matrix is not positive semi-definite: eigenvalue {eigenvalue:e} below clamp threshold")]
    NotPositiveSemiDefinite { eigenvalue: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, Error>;
