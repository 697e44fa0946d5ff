use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("index {index} at position {position} is out of range for vocabulary of size {size}")]
    Index {
        position: usize,
        index: usize,
        size: usize,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("vocabulary mismatch: model expects {expected}, dataset has {found}")]
    VocabMismatch { expected: String, found: String },

    #[error(
        "training diverged at epoch {epoch}, batch {batch}: {detail} (try a lower learning_rate or set gradient_clip)"
    )]
    Divergence {
        epoch: usize,
        batch: usize,
        detail: String,
    },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input data rather than bad configuration.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Index { .. }
                | Error::Integrity(_)
                | Error::VocabMismatch { .. }
                | Error::File { .. }
                | Error::Io(_)
                | Error::Csv(_)
        )
    }
}
