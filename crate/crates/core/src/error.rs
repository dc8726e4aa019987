//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All failures surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value or combination.
    #[error("config error: {0}")]
    Config(String),

    /// Tensor or image shape does not satisfy an operation's contract.
    #[error("shape error: {0}")]
    Shape(String),

    /// Dataset missing, malformed, or inconsistent with its manifest.
    #[error("dataset error: {0}")]
    Dataset(String),

    /// Checkpoint missing, corrupt, or incompatible with the requested model.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Training diverged (non-finite loss).
    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    /// Model does not support the requested operation.
    #[error("unsupported model: {0}")]
    Unsupported(String),

    /// Image decode/encode failure.
    #[error("image error: {0}")]
    Image(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Attaches a path to an io error.
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }
}
