use thiserror::Error;

use crate::tensor::Shape;

pub type Result<T> = std::result::Result<T, TensorError>;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("data length {len} does not match shape {shape}")]
    DataLength { shape: Shape, len: usize },

    #[error("{op}: {axis} axis mismatch, expected {expected}, got {actual}")]
    Dimension { op: &'static str, axis: &'static str, expected: usize, actual: usize },

    #[error("{op}: shapes {left} and {right} are incompatible")]
    ShapeMismatch { op: &'static str, left: Shape, right: Shape },

    #[error("{op}: {msg}")]
    Parameter { op: &'static str, msg: String },

    #[error("pixel_shuffle: {channels} channels not divisible by r^2 = {r2}")]
    ChannelDivisibility { channels: usize, r2: usize },

    #[error("batchnorm2d: train mode needs more than one value per channel, got {count}")]
    DegenerateStatistics { count: usize },

    #[error("expected a scalar (1, 1, 1, 1) tensor, got {0}")]
    NotScalar(Shape),

    #[error("{axis} index {index} out of range for length {len}")]
    Index { axis: &'static str, index: usize, len: usize },

    #[error("{0}: empty input")]
    Empty(&'static str),

    #[error("container: {0}")]
    Container(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
