use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GwError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("refused: {0}")]
    Refused(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl GwError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        GwError::Domain(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        GwError::Validation(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GwError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = GwError> = std::result::Result<T, E>;
