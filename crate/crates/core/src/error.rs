use std::fmt;

/// Errors produced anywhere in the codec pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("{what} {value} out of range")]
    OutOfRange { what: &'static str, value: i64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("bitstream truncated")]
    Truncated,

    #[error("point cloud has no pose")]
    MissingPose,

    #[error("training dataset is empty")]
    EmptyDataset,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(offset: usize, message: impl fmt::Display) -> Self {
        Error::Parse {
            offset,
            message: message.to_string(),
        }
    }

    pub(crate) fn out_of_range(what: &'static str, value: impl Into<i64>) -> Self {
        Error::OutOfRange {
            what,
            value: value.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
