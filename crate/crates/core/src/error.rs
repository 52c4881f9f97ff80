use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not Hermitian (residual {0:.3e})")]
    NotHermitian(f64),
    #[error("matrix is not unitary (residual {0:.3e})")]
    NotUnitary(f64),
    #[error("columns are not orthonormal (residual {0:.3e})")]
    NotOrthonormal(f64),
    #[error("operator is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPositive(f64),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("channel is not CPTP: {0}")]
    NotCptp(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// A run completed but a checked property failed.
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("malformed configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
