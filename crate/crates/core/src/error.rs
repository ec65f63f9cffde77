use thiserror::Error;

/// Errors raised by the toolkit. Report-style checks return findings instead.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("alphabet mismatch: {0}")]
    AlphabetMismatch(String),
    #[error("state budget of {limit} states exceeded")]
    Budget { limit: usize },
    #[error("no theorem template matches: {0}")]
    NoTemplate(String),
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    /// Process exit code used by the CLI for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Budget { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
