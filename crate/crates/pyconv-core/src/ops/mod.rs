//! Layer kernels: each operation has a forward pass and the matching
//! analytic backward pass.
//!
//! All kernels are pure functions over tensors. Internal parallelism only
//! ever splits work across output elements or disjoint planes while keeping
//! each element's accumulation order fixed, so results are bit-identical
//! regardless of thread count.

mod activation;
mod conv;
mod linear;
mod loss;
mod norm;
mod pool;
mod resize;

pub use activation::{dropout_backward, dropout_forward, relu_backward, relu_forward};
pub use conv::{conv_backward, conv_forward, conv_forward_direct, ConvGrads, ConvSpec};
pub use linear::{linear_backward, linear_forward, LinearGrads};
pub use loss::softmax_cross_entropy;
pub use norm::{batchnorm_backward, batchnorm_forward, BatchNormGrads, BatchNormState, BnMode};
pub use pool::{
    adaptive_avg_pool_backward, adaptive_avg_pool_forward, global_avg_pool_backward,
    global_avg_pool_forward, maxpool_backward, maxpool_forward, PoolSpec,
};
pub use resize::{bilinear_backward, bilinear_forward};

/// Output extent of one convolution/pooling axis:
/// `floor((in + 2*pad - dilation*(k-1) - 1) / stride) + 1`.
pub(crate) fn conv_out_extent(
    input: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    dilation: usize,
) -> Option<usize> {
    let span = dilation * (kernel - 1) + 1;
    let padded = input + 2 * padding;
    if padded < span || stride == 0 {
        return None;
    }
    Some((padded - span) / stride + 1)
}

/// Row-major odometer over a multi-extent index space.
pub(crate) fn for_each_index(extents: &[usize], mut f: impl FnMut(&[usize], usize)) {
    let total: usize = extents.iter().product();
    let mut idx = vec![0usize; extents.len()];
    for flat in 0..total {
        f(&idx, flat);
        for axis in (0..extents.len()).rev() {
            idx[axis] += 1;
            if idx[axis] < extents[axis] {
                break;
            }
            idx[axis] = 0;
        }
    }
}
