//! Forward and backward numeric kernels.

mod activation;
mod conv;
mod dense;
mod loss;
mod pool;

pub use activation::{relu, relu_backward};
pub use conv::{conv2d_backward, conv2d_forward, ConvParams};
pub use dense::{dense_backward, dense_forward, DenseParams};
pub use loss::softmax_xent;
pub use pool::{maxpool2x2_backward, maxpool2x2_forward, PoolIndices};
