//! Shared error type.

use std::path::PathBuf;

/// Errors surfaced by pipeline operations.
///
/// Pure math helpers that cannot fail return values directly; everything
/// that validates input, touches the filesystem, or can diverge numerically
/// reports through this type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Caller-supplied values violate a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A file's content does not match its documented schema.
    #[error("schema error in {path}: {message}")]
    Schema { path: PathBuf, message: String },

    /// A numeric routine left its valid domain (NaN/Inf, divergence,
    /// undefined blends, non-PSD covariances).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Filesystem-level failure, with the offending path.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Convenience constructor for [`Error::InvalidInput`].
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Convenience constructor for [`Error::Numeric`].
    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// Convenience constructor for [`Error::Schema`].
    pub fn schema(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Schema { path: path.into(), message: msg.into() }
    }

    /// Convenience constructor for [`Error::Io`].
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
