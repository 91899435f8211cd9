use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("ingestion error for article {id}: {reason}")]
    Ingest { id: String, reason: String },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("document {0} has no tokens")]
    EmptyDocument(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("non-finite value during training (mode {mode}, epoch {epoch}, lr {lr})")]
    NonFinite { mode: String, epoch: usize, lr: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("document id mismatch: {0} vs {1}")]
    IdMismatch(String, String),

    #[error("invalid input: {0}")]
    Invalid(String),

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

    /// True when the failure comes from bad user input rather than a bug.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::NonFinite { .. } | Error::Json(_))
    }
}
