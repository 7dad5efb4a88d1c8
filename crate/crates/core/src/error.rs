use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A binary record could not be decoded; `offset` is the byte offset of
    /// the offending record.
    #[error("decode error at byte offset {offset}: {reason}")]
    Decode { offset: usize, reason: String },

    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },

    /// Input violates an operation's precondition (geometry, bounds, sizes).
    #[error("validation error: {0}")]
    Validation(String),

    #[error("config error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors that originate in user configuration.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. })
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
