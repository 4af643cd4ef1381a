use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or configuration violates its invariants.
    #[error("configuration error: {0}")]
    Config(String),

    /// A loaded document failed validation; `path` locates the offending field.
    #[error("validation error at `{path}`: {msg}")]
    Validation { path: String, msg: String },

    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Binary container is malformed. `offset` is the byte position where decoding failed.
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    #[error("shape error in layer `{layer}`: {msg}")]
    Shape { layer: String, msg: String },

    #[error("non-finite activation after layer `{layer}`")]
    Numeric { layer: String },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("sequencing error: {0}")]
    Sequencing(String),

    #[error("latency accounting error: {0}")]
    Accounting(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            msg: msg.into(),
        }
    }

    pub(crate) fn validation(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
