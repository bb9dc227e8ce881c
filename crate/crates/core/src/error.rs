use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, GeegaError>;

#[derive(Debug, Error)]
pub enum GeegaError {
    #[error("ingestion error in {path}: {message}")]
    Ingest { path: PathBuf, message: String },

    #[error("invalid synthetic spec: {0}")]
    Spec(String),

    #[error("invalid label: {0}")]
    Label(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("malformed container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl GeegaError {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        GeegaError::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
