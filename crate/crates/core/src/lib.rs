//! DRNet: a double refinement decoder for monocular depth estimation over a
//! small residual backbone, with training, evaluation and benchmarking.

pub mod backbone;
pub mod bench;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod decoder;
pub mod error;
pub mod gradsuite;
pub mod layers;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod train;

pub use drnet_tensor as tensor;

pub use config::RunConfig;
pub use error::{DrnetError, Result};
pub use model::DepthModel;
