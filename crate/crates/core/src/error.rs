use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input records or datasets.
    #[error("validation error: {0}")]
    Validation(String),

    /// Invalid configuration values.
    #[error("config error: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected}, got {got} ({context})")]
    Shape {
        expected: usize,
        got: usize,
        context: String,
    },

    #[error("batch error: {0}")]
    Batch(String),

    /// Pre-normalization projection output too close to zero to normalize.
    #[error("degenerate vector: norm {norm:e} below {min:e}")]
    Degenerate { norm: f64, min: f64 },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn shape(expected: usize, got: usize, context: impl Into<String>) -> Self {
        Error::Shape {
            expected,
            got,
            context: context.into(),
        }
    }

    /// True for errors caused by the filesystem rather than the content.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
