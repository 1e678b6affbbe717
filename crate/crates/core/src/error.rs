use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration; `field` names the offending key.
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    /// An operation was evaluated outside its mathematical domain.
    #[error("domain error in {op}: {message} (value {value})")]
    Domain {
        op: &'static str,
        message: String,
        value: f64,
    },

    #[error("degenerate geometry: {0}")]
    Geometry(String),

    #[error("non-finite value in network layer {layer}")]
    NumericOverflow { layer: usize },

    /// A loss or gradient entry became NaN or infinite during training.
    #[error("training diverged: non-finite {what} at index {index}")]
    Divergence { what: &'static str, index: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn domain(op: &'static str, message: impl Into<String>, value: f64) -> Self {
        Error::Domain {
            op,
            message: message.into(),
            value,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
