//! Fully-connected layer: `[N, D] x [K, D]^T + bias -> [N, K]`.

use rayon::prelude::*;

use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn linear_forward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    if input.rank() != 2 || weights.rank() != 2 {
        return shape_err("linear expects [N, D] input and [K, D] weights".to_string());
    }
    let (n, d) = (input.dims()[0], input.dims()[1]);
    let (k, wd) = (weights.dims()[0], weights.dims()[1]);
    if wd != d || bias.dims() != [k] {
        return shape_err(format!(
            "linear shapes disagree: input [{n}, {d}], weights [{k}, {wd}], bias {:?}",
            bias.dims()
        ));
    }
    let mut output = Tensor::zeros(&[n, k])?;
    let x = input.data();
    let w = weights.data();
    let b = bias.data();
    output
        .data_mut()
        .par_chunks_mut(k)
        .enumerate()
        .for_each(|(row, out_row)| {
            let xr = &x[row * d..(row + 1) * d];
            for (j, slot) in out_row.iter_mut().enumerate() {
                let wr = &w[j * d..(j + 1) * d];
                let mut acc = T::zero();
                for (&xi, &wi) in xr.iter().zip(wr) {
                    acc += xi * wi;
                }
                *slot = acc + b[j];
            }
        });
    Ok(output)
}

#[derive(Debug)]
pub struct LinearGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn linear_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_output: &Tensor<T>,
) -> Result<LinearGrads<T>> {
    let (n, d) = (input.dims()[0], input.dims()[1]);
    let k = weights.dims()[0];
    if grad_output.dims() != [n, k] {
        return shape_err("linear_backward: grad_output shape mismatch".to_string());
    }
    let x = input.data();
    let w = weights.data();
    let g = grad_output.data();

    let mut grad_input = Tensor::zeros(&[n, d])?;
    grad_input
        .data_mut()
        .par_chunks_mut(d)
        .enumerate()
        .for_each(|(row, gin_row)| {
            let gr = &g[row * k..(row + 1) * k];
            for (i, slot) in gin_row.iter_mut().enumerate() {
                let mut acc = T::zero();
                for (j, &gj) in gr.iter().enumerate() {
                    acc += gj * w[j * d + i];
                }
                *slot = acc;
            }
        });

    let mut grad_weights = Tensor::zeros(&[k, d])?;
    grad_weights
        .data_mut()
        .par_chunks_mut(d)
        .enumerate()
        .for_each(|(j, gw_row)| {
            for (i, slot) in gw_row.iter_mut().enumerate() {
                let mut acc = T::zero();
                for row in 0..n {
                    acc += g[row * k + j] * x[row * d + i];
                }
                *slot = acc;
            }
        });

    let mut grad_bias = Tensor::zeros(&[k])?;
    for (j, slot) in grad_bias.data_mut().iter_mut().enumerate() {
        let mut acc = T::zero();
        for row in 0..n {
            acc += g[row * k + j];
        }
        *slot = acc;
    }

    Ok(LinearGrads {
        input: grad_input,
        weights: grad_weights,
        bias: grad_bias,
    })
}
