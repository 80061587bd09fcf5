//! IO error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        /// 1-based line for text formats, byte offset for binary ones.
        line: usize,
        message: String,
    },

    #[error("bad magic: expected {expected:?}, got {got:?}")]
    BadMagic { expected: [u8; 4], got: [u8; 4] },

    #[error("unsupported version {0}")]
    BadVersion(u32),

    #[error("truncated payload: needed {needed} bytes, got {got}")]
    TruncatedPayload { needed: usize, got: usize },

    #[error("unsupported variant: {0}")]
    UnsupportedVariant(String),

    #[error("image: {0}")]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Core(#[from] scenefit_core::CoreError),

    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

impl IoError {
    pub fn parse(path: &std::path::Path, line: usize, message: impl Into<String>) -> IoError {
        IoError::Parse {
            path: path.display().to_string(),
            line,
            message: message.into(),
        }
    }
}
