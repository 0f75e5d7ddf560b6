//! Crate-wide error type.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A probability vector violated its invariants (non-finite or negative
    /// entries, bad sum).
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    /// An operation needed a gold label that is absent.
    #[error("missing gold label for clip `{0}`")]
    MissingGold(String),

    /// Same clip id appears twice where uniqueness is required.
    #[error("duplicate clip id `{0}`")]
    DuplicateClip(String),

    /// Text-format parse failure with file position.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// Vector/matrix sizes do not line up.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// An operation received an empty input it cannot work with.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// Input outside an operation's domain (e.g. negative chi-square
    /// features, boxes outside the frame).
    #[error("domain error: {0}")]
    Domain(String),

    /// Training failed to make progress or diverged.
    #[error("training error: {0}")]
    Training(String),

    /// Invalid configuration value.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(path: &std::path::Path, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.display().to_string(),
            line,
            msg: msg.into(),
        }
    }
}
