use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent configuration (geometry, grid, scenario ranges).
    #[error("configuration error: {0}")]
    Config(String),
    /// Input data that violates an operation's preconditions.
    #[error("invalid input: {0}")]
    Input(String),
    /// A file whose contents do not follow the expected layout.
    #[error("malformed {kind}: {msg}")]
    Format { kind: &'static str, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Self::Input(msg.into())
    }

    pub(crate) fn format(kind: &'static str, msg: impl Into<String>) -> Self {
        Self::Format {
            kind,
            msg: msg.into(),
        }
    }
}
