use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported shape: {0}")]
    UnsupportedShape(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("training diverged at epoch {epoch}: {detail}")]
    TrainingDivergence { epoch: usize, detail: String },

    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
