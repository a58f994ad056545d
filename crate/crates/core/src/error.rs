use std::path::PathBuf;

use drnet_tensor::TensorError;
use thiserror::Error;

use crate::data::netpbm::ImageError;

pub type Result<T> = std::result::Result<T, DrnetError>;

#[derive(Debug, Error)]
pub enum DrnetError {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("{path}: {msg}")]
    Config { path: String, msg: String },

    #[error("input size {h}x{w} is not divisible by 32")]
    Divisibility { h: usize, w: usize },

    #[error("{what}: need at least {min}x{min}, got {h}x{w}")]
    TooSmall { what: &'static str, min: usize, h: usize, w: usize },

    #[error("optimizer: parameter {0} has no gradient")]
    MissingGradient(String),

    #[error("checkpoint: missing entry {0}")]
    MissingEntry(String),

    #[error("checkpoint config mismatch in {section}: checkpoint has {found}, expected {expected}")]
    ConfigMismatch { section: &'static str, expected: String, found: String },

    #[error("metrics: no valid ground-truth pixels")]
    EmptyMask,

    #[error("unknown decoder {0:?}")]
    UnknownDecoder(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("{}: {source}", path.display())]
    Image { path: PathBuf, source: ImageError },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl DrnetError {
    pub fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        DrnetError::Config { path: path.into(), msg: msg.into() }
    }
}
