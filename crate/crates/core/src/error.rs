use thiserror::Error;

use crate::modelconfig::ConfigError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An operation needed at least one foreground pixel and found none.
    #[error("no foreground pixels")]
    NoForeground,

    /// IoU of two empty masks.
    #[error("IoU is undefined for two empty masks")]
    UndefinedIou,

    #[error("could not place lesion {placed} of {requested} after bounded retries")]
    Capacity { placed: usize, requested: usize },

    #[error("malformed JSON: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("unknown category id {0}")]
    UnknownCategory(u32),

    #[error("annotation or prediction references missing image_id {0:?}")]
    DanglingImageId(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
