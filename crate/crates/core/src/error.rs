use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: String, reason: String },

    #[error("trace slot {slot}: {reason}")]
    InvalidSlot { slot: usize, reason: String },

    #[error("trace format: {0}")]
    TraceFormat(String),

    #[error("config: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("unknown policy `{0}`")]
    UnknownPolicy(String),

    #[error("invalid decision: {0}")]
    InvalidDecision(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::InvalidParam {
        name: name.into(),
        reason: reason.into(),
    }
}
