use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: file is not valid UTF-8")]
    Utf8 { path: PathBuf },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{0}")]
    Empty(&'static str),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("scorer `{identity}` does not support {capability}")]
    Unsupported {
        identity: String,
        capability: &'static str,
    },

    #[error("{service} request failed: {message}")]
    External {
        service: String,
        message: String,
        /// Where partial progress was saved, when the operation is resumable.
        checkpoint: Option<PathBuf>,
    },

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn external(service: impl Into<String>, message: impl Into<String>) -> Self {
        Error::External {
            service: service.into(),
            message: message.into(),
            checkpoint: None,
        }
    }

    pub(crate) fn with_checkpoint(self, path: Option<PathBuf>) -> Self {
        match self {
            Error::External {
                service, message, ..
            } => Error::External {
                service,
                message,
                checkpoint: path,
            },
            other => other,
        }
    }

    pub fn is_external(&self) -> bool {
        matches!(self, Error::External { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
