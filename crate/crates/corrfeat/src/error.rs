//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid model configuration: {0}")]
    InvalidModel(String),

    #[error("csv error at line {line}: {message}")]
    Csv { line: usize, message: String },

    #[error("holdout constraints unsatisfiable: {0}")]
    HoldoutUnsatisfiable(String),

    #[error("incompatible initialisation: {0}")]
    IncompatibleInit(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
