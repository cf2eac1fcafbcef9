use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Shape/dimension violation; the message names the offending dimensions.
    #[error("{op}: {details}")]
    ShapeMismatch { op: &'static str, details: String },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(op: &'static str, details: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            op,
            details: details.into(),
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
