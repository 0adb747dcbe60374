use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (dimension mismatch, bad parameter, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A world description failed to parse or violated a world invariant.
    #[error("world file, line {line}: {message}")]
    WorldFormat { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Contract(msg.into()))
}
