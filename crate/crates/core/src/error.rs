use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid hyperparameters, incompatible model specs, bad config files.
    #[error("configuration error: {0}")]
    Config(String),

    /// Shape mismatches and out-of-range call arguments.
    #[error("argument error: {0}")]
    Argument(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    /// The supplied model cannot do what the operation needs (e.g. it has no gradient).
    #[error("capability error: {0}")]
    Capability(String),

    #[error("training aborted at epoch {epoch}, iteration {iteration}: {reason}")]
    Diverged { epoch: usize, iteration: usize, reason: String },

    #[error("feature extraction failed on batch {batch}: {reason}")]
    Extraction { batch: usize, reason: String },

    #[error("failed to load {path}: {reason}")]
    Load { path: PathBuf, reason: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Torch(#[from] tch::TchError),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

pub(crate) fn arg_err(msg: impl Into<String>) -> Error {
    Error::Argument(msg.into())
}
