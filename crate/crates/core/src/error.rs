use thiserror::Error;

/// Errors raised by the clustering pipeline.
#[derive(Debug, Error)]
pub enum SticcError {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("input contains no points")]
    EmptyInput,

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("undefined metric: {0}")]
    Undefined(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SticcError>;
