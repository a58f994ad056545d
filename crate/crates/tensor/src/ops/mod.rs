mod conv;
mod elementwise;
mod interp;
mod layout;
mod norm;
mod pool;

pub use conv::conv2d;
pub use elementwise::{abs, add, add_scalar, div, log, mean, mul, mul_scalar, relu, sqrt, sub, sum};
pub use interp::{axis_taps, bilinear_upsample};
pub use layout::{concat_channels, pad_replicate, pixel_shuffle};
pub use norm::{batchnorm2d, Mode, RunningStats};
pub use pool::{avg_pool_to, maxpool2d};
