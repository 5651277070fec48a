use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: expected shape {expected}, got {actual}")]
    Shape {
        op: &'static str,
        expected: String,
        actual: String,
    },

    #[error("{op}: expected {expected} input channels, got {actual}")]
    Channels {
        op: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid model config: {0}")]
    Config(String),

    #[error("tape was already consumed by a backward pass")]
    TapeConsumed,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("{}: {message}", path.display())]
    Image { path: PathBuf, message: String },

    #[error("{}:{line}: {message}", path.display())]
    Manifest {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("loss became non-finite at epoch {epoch}, batch {batch} (lr {lr:e})")]
    Diverged { epoch: usize, batch: usize, lr: f64 },

    #[error("empty input: {0}")]
    Empty(String),
}

impl Error {
    pub(crate) fn shape(op: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            op,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
