use std::path::PathBuf;

/// Errors produced anywhere in the adaptation toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("non-finite logits in batch row {row}")]
    NonFinite { row: usize },

    #[error("degenerate class {class}: total assignment weight below 1e-12")]
    DegenerateClass { class: usize },

    #[error("zero batch mean for class {class} in expectation ratio")]
    ZeroBatchMean { class: usize },

    #[error("no pseudo-label bank entry for sample `{sample_key}`")]
    Join { sample_key: String },

    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
