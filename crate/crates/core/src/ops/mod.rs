//! Forward kernels and their backward counterparts.

mod conv;
mod elementwise;
mod pool;
mod resample;
mod shuffle;

pub use conv::{conv2d, conv2d_backward_input, conv2d_backward_weights, conv2d_raw, ConvWeights};
pub use elementwise::{
    add, concat_channels, leaky_relu, leaky_relu_backward, relu, relu_backward, scale_channels,
    scale_channels_backward, sigmoid, sigmoid_backward, sigmoid_scalar, split_channels, sub,
};
pub use pool::{global_contrast_pool, global_contrast_pool_backward};
pub use resample::{axis_taps, bicubic_downsample, cubic};
pub use shuffle::{pixel_shuffle, pixel_unshuffle};
