use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] zippo_core::Error),

    #[error("config: {0}")]
    Config(String),

    /// Training aborted on a non-finite loss; names the branch.
    #[error("non-finite loss in {branch} branch at step {step}")]
    NonFiniteLoss { branch: &'static str, step: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
