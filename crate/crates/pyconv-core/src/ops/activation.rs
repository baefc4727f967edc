//! Elementwise activations: ReLU and (inverted) dropout.

use crate::error::{shape_err, Result};
use crate::rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn relu_forward<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|x| if x > T::zero() { x } else { T::zero() })
}

/// Gradient is masked by `input > 0`; the kink at exactly zero propagates
/// nothing.
pub fn relu_backward<T: Scalar>(input: &Tensor<T>, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
    if input.dims() != grad_output.dims() {
        return shape_err("relu_backward: extents differ".to_string());
    }
    let data = input
        .data()
        .iter()
        .zip(grad_output.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(input.dims(), data)
}

/// Inverted dropout: keeps an element with probability `1 - p` and scales it
/// by `1 / (1 - p)`. The mask is a pure function of `(seed, element index)`.
/// Returns the output and the mask (0 or the keep scale).
pub fn dropout_forward<T: Scalar>(input: &Tensor<T>, p: f64, seed: u64) -> (Tensor<T>, Tensor<T>) {
    assert!((0.0..1.0).contains(&p), "dropout probability {p}");
    let scale = T::from_f64(1.0 / (1.0 - p));
    let mask_data: Vec<T> = (0..input.len())
        .map(|i| {
            if rng::unit_uniform(seed, i as u64) <= p {
                T::zero()
            } else {
                scale
            }
        })
        .collect();
    let mask = Tensor::from_vec(input.dims(), mask_data).expect("mask dims");
    let out_data = input
        .data()
        .iter()
        .zip(mask.data())
        .map(|(&x, &m)| x * m)
        .collect();
    (
        Tensor::from_vec(input.dims(), out_data).expect("output dims"),
        mask,
    )
}

pub fn dropout_backward<T: Scalar>(mask: &Tensor<T>, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
    if mask.dims() != grad_output.dims() {
        return shape_err("dropout_backward: extents differ".to_string());
    }
    let data = mask
        .data()
        .iter()
        .zip(grad_output.data())
        .map(|(&m, &g)| m * g)
        .collect();
    Tensor::from_vec(mask.dims(), data)
}
