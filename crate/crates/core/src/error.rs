use thiserror::Error;

/// Errors raised by the factorization, structured-matrix and I/O routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("rank {rank} out of range (maximum {max})")]
    RankOutOfRange { rank: usize, max: usize },

    #[error("operator is missing the `{0}` capability")]
    MissingCapability(&'static str),

    #[error("non-finite entry encountered")]
    NonFinite,

    #[error("matrix is zero")]
    ZeroMatrix,

    #[error("matrix is not Hermitian positive semidefinite (min eigenvalue {min_eig:e}, trace {trace:e})")]
    NotPsd { min_eig: f64, trace: f64 },

    #[error("zero pivot at ({row}, {col})")]
    ZeroPivot { row: usize, col: usize },

    #[error("inconsistent PSD structure: {0}")]
    PsdViolation(String),

    #[error("coincident target point {target} and source point {src}")]
    CoincidentPoints { target: usize, src: usize },

    #[error("singular or ill-conditioned system: {0}")]
    Singular(String),

    #[error("decomposition failed: {0}")]
    Decomposition(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
