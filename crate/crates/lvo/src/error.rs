use std::path::Path;

/// Crate-wide error type. Variants map onto the failure classes the CLI
/// reports through distinct exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed file contents or config text.
    #[error("parse error: {0}")]
    Parse(String),
    /// Dimension or layout mismatch between rasters, tensors, or trajectories.
    #[error("shape error: {0}")]
    Shape(String),
    /// Invalid value: violated invariant, bad configuration field, etc.
    #[error("invalid value: {0}")]
    Invalid(String),
    /// Underlying I/O failure, annotated with the path involved.
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
