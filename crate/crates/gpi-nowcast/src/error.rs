use std::path::PathBuf;

/// Crate-wide error type.
///
/// `Config` maps to exit code 2 at the CLI boundary; every other variant maps
/// to exit code 3.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed content in a file this crate reads or validates (CSV, JSON).
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    /// Invalid configuration or command usage.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Data that violates a documented contract (shape mismatch, domain bound,
    /// missing country, insufficient rows).
    #[error("{0}")]
    Data(String),

    /// Model fit/predict contract violation.
    #[error("{0}")]
    Model(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format { path: path.into(), message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Error::Config(message.into())
    }

    pub fn data(message: impl Into<String>) -> Self {
        Error::Data(message.into())
    }

    pub fn model(message: impl Into<String>) -> Self {
        Error::Model(message.into())
    }

    /// Process exit code for this error at the CLI boundary.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
