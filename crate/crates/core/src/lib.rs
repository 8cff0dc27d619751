//! Training engine and ablation-based interpretability toolkit for a small
//! digit-classification CNN.
//!
//! The crate covers the full pipeline:
//!
//! * [`tensor`] / [`ops`] / [`optim`] — dense tensors, the forward/backward
//!   kernels (conv, pool, dense, ReLU, softmax cross-entropy) and Adam.
//! * [`model`] — the two-conv / three-dense network, per-filter ablation
//!   masks, and a fully convolutional forward pass for arbitrary image
//!   sizes.
//! * [`data`] — MNIST IDX parsing, binary PGM I/O, polarity preprocessing
//!   and deterministic batch schedules.
//! * [`train`] — the seeded, reproducible training loop.
//! * [`interpret`] — filter importance via ablation (baseline error minus
//!   per-filter error, softmax-normalized) and localization heatmaps as
//!   weighted sums of final-conv feature maps.
//! * [`checkpoint`] — bit-exact model persistence.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod init;
pub mod interpret;
pub mod model;
pub mod ops;
pub mod optim;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use model::{AblationMask, FeatureStack, ModelSpec, Network};
pub use tensor::{Scalar, Tensor};
