use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates one of its invariants. `key` names the
    /// offending setting using the dotted config-file spelling.
    #[error("invalid configuration `{key}`: {reason}")]
    Config { key: String, reason: String },

    /// A caller broke an operation's contract (wrong lengths, illegal action, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite values in network output (parameter version {version}): {detail}")]
    Numerical { version: u64, detail: String },

    #[error("network width mismatch: expected {expected}, found {found}")]
    WidthMismatch { expected: String, found: String },

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("malformed trace at line {line}: {reason}")]
    Trace { line: u64, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
