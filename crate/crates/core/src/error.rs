use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("code construction failed: {0}")]
    Construction(String),

    #[error("format error: {0}")]
    Format(String),

    /// Body ended before the declared content was decoded. `partial` is set when
    /// at least one block had already been reconstructed.
    #[error("decode error: {msg} (partial frame: {partial})")]
    Decode { msg: String, partial: bool },

    #[error("training diverged at epoch {epoch}: {msg}")]
    Training { epoch: usize, msg: String },

    #[error("privacy violation: {0}")]
    PrivacyViolation(String),

    #[error("unknown node: {0}")]
    UnknownNode(String),

    #[error("registration failed: {0}")]
    Registration(String),

    #[error("malformed schedule: {0}")]
    Schedule(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
