use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A transition was requested from a state that already terminated.
    #[error("cannot step terminal state (prefix length {len})")]
    SteppedTerminal { len: usize },

    #[error("terminal reward requested for a non-terminal state")]
    NonTerminalReward,

    #[error("token {token} is outside the vocabulary of size {vocab_size}")]
    TokenOutOfRange { token: u32, vocab_size: usize },

    #[error("privileged metric `{metric}` requires a reference sequence")]
    MissingReference { metric: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("enumeration refused: {count} terminated sequences exceeds the limit of {limit}")]
    EnumerationGuard { count: u128, limit: u128 },

    #[error("{path}:{line}: {message}")]
    Dataset {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate instance id `{0}`")]
    DuplicateId(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the failure stems from the filesystem rather than from the
    /// request itself.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
