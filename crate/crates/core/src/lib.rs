//! Deep joint source-channel coding with selectively depthwise-separable
//! convolutional layers.
//!
//! The crate bundles a small f64 tensor library with reverse-mode autodiff,
//! the codec and its variants, a simulated wireless channel, complexity
//! accounting and a desk-scale training loop.

pub mod autodiff;
pub mod channel;
pub mod complexity;
pub mod config;
pub mod error;
pub mod gradcheck;
pub mod model;
pub mod ops;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor4;
