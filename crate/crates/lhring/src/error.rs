use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Inputs that violate a documented precondition or invariant.
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("config: {0}")]
    Config(String),
    /// Integration produced non-finite values or failed its self-check.
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("overflow: {0}")]
    Overflow(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Config(_) => 2,
            Error::Numerical(_) | Error::Overflow(_) => 3,
            Error::Io(_) => 2,
        }
    }
}
