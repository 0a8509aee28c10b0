//! Crate-wide error type.

use thiserror::Error;

/// Unified error for configuration, data, numeric, and I/O failures.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent configuration.
    #[error("config: {0}")]
    Config(String),

    /// A caller violated an API contract (shape mismatch, bad label set, ...).
    #[error("contract: {0}")]
    Contract(String),

    /// Training produced a non-finite loss and was aborted.
    #[error("training diverged: {0}")]
    Diverged(String),

    /// Artifact on disk is missing, truncated, or fails validation.
    #[error("artifact: {0}")]
    Artifact(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Serialization(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

impl From<toml::ser::Error> for Error {
    fn from(e: toml::ser::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
