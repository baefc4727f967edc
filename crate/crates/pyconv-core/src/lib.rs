//! Pyramidal convolution (PyConv) kernels and networks, implemented from scratch.
//!
//! A PyConv layer runs several convolutions in parallel over the same input,
//! each level with a larger spatial kernel and a larger group count, and
//! concatenates the per-level outputs channel-wise. With the group counts
//! chosen as (rounded) ratios of the squared kernel sizes, the layer costs
//! roughly the same as a single small-kernel convolution while mixing several
//! receptive-field scales.
//!
//! The crate contains:
//!
//! - [`tensor`]: a dense row-major NCHW/NCTHW tensor with deterministic,
//!   counter-based initialization,
//! - [`ops`]: grouped 2D/3D convolution (direct reference path and an
//!   im2col fast path that matches it bit-for-bit), pooling, batch norm,
//!   bilinear resize, linear and softmax cross-entropy, all with backward
//!   passes,
//! - [`pyconv`]: the pyramidal convolution layer, its validation rules,
//!   default group schedule and exact parameter/FLOP cost,
//! - [`graph`]: a small DAG executor over named layer nodes,
//! - [`arch`]: builders for the classification, segmentation, detection and
//!   video networks built from PyConv blocks,
//! - [`analyzer`]: static parameter and FLOP accounting over a built graph,
//! - [`detection`]: SSD default boxes, box decoding and NMS,
//! - [`train`]: SGD with momentum, the step LR schedule, a synthetic
//!   grating dataset, a toy training loop and a finite-difference gradient
//!   checker.
//!
//! All numeric code is generic over the scalar type via [`scalar::Scalar`]
//! (`f32` for regular use, `f64` for gradient checking); the crate root
//! exposes concrete aliases for the common cases.

pub mod analyzer;
pub mod arch;
pub mod detection;
pub mod error;
pub mod golden;
pub mod graph;
pub mod ops;
pub mod pyconv;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;

/// Single-precision tensor, the default for building and training networks.
pub type Tensor32 = Tensor<f32>;
/// Double-precision tensor, used by the finite-difference gradient checks.
pub type Tensor64 = Tensor<f64>;

/// Single-precision network graph.
pub type Network32 = graph::NetworkGraph<f32>;
/// Double-precision network graph (gradient checking).
pub type Network64 = graph::NetworkGraph<f64>;
