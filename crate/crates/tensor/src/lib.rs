//! Dense NCHW tensors for the depth-refinement network.
//!
//! A [`Tensor`] is an immutable, reference-counted buffer of `f64` values.
//! Ops in [`ops`] record a graph node when grad mode is on and any input
//! requires a gradient; [`Tensor::backward`] walks that graph in reverse and
//! accumulates gradients on leaves. The op set is closed: convolution,
//! batchnorm, ReLU, pooling, pixel shuffle, bilinear upsampling, channel
//! concat, replicate padding, and elementwise arithmetic with mean/sum.
//!
//! [`gradcheck`] provides central finite differences as an oracle, and
//! [`container`] reads and writes the DRT1 named-tensor format.

mod autograd;
pub mod container;
mod error;
pub mod gradcheck;
pub mod ops;
mod param;
mod tensor;

pub use error::{Result, TensorError};
pub use param::Parameter;
pub use tensor::{is_grad_enabled, no_grad, to_storage, track_peak_elements, Real, Shape, Tensor};
