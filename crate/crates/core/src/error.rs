use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the simulator, policy, trainer and harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid compute demand {0}: cycles per bit must be positive")]
    InvalidDemand(f64),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("shape mismatch for {role}: expected {expected}, got {actual}")]
    Shape {
        role: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid action: {0}")]
    InvalidAction(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("checkpoint integrity check failed: {0}")]
    Integrity(String),

    #[error("checkpoint version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("checkpoint does not match scenario: {0}")]
    Dimension(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),

    #[error("plot error: {0}")]
    Plot(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors caused by user-supplied configuration rather than runtime state.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_)
                | Error::Toml(_)
                | Error::NotFound(_)
                | Error::Parse { .. }
                | Error::InvalidInput(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
