use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GlfmError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("feature extraction failed: {0}")]
    Extraction(String),

    #[error("training diverged at iteration {iteration}")]
    Diverged {
        iteration: usize,
        trace: Vec<(usize, f64)>,
    },

    #[error("model error: {0}")]
    Model(String),
}

impl GlfmError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GlfmError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse_line(line: usize, message: impl Into<String>) -> Self {
        GlfmError::Parse {
            location: format!("line {line}"),
            message: message.into(),
        }
    }

    pub(crate) fn parse_byte(offset: usize, message: impl Into<String>) -> Self {
        GlfmError::Parse {
            location: format!("byte {offset}"),
            message: message.into(),
        }
    }
}

pub type Result<T, E = GlfmError> = std::result::Result<T, E>;
