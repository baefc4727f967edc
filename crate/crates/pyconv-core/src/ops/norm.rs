//! Batch normalization over the channel axis of `[N, C, spatial...]`.

use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    /// Normalize by batch statistics over `(N, spatial)`; optionally fold the
    /// batch statistics into the running estimates with momentum
    /// [`BN_MOMENTUM`].
    Train { update_running: bool },
    /// Normalize by the running estimates.
    Eval,
}

/// Per-forward state the backward pass needs.
#[derive(Debug, Clone)]
pub struct BatchNormState<T> {
    pub mode: BnMode,
    /// Mean used for normalization (batch or running, depending on mode).
    pub mean: Vec<T>,
    /// Variance used for normalization (biased, over `(N, spatial)`).
    pub var: Vec<T>,
}

fn per_channel_layout<T: Scalar>(input: &Tensor<T>) -> (usize, usize, usize) {
    let n = input.batch();
    let c = input.channels();
    let plane: usize = input.spatial().iter().product();
    (n, c, plane)
}

/// Forward pass. `running_mean` / `running_var` are read in eval mode and
/// updated in train mode (when requested).
#[allow(clippy::too_many_arguments)]
pub fn batchnorm_forward<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &mut Tensor<T>,
    running_var: &mut Tensor<T>,
    mode: BnMode,
) -> Result<(Tensor<T>, BatchNormState<T>)> {
    if input.rank() < 3 {
        return shape_err("batchnorm expects [N, C, spatial...] input".to_string());
    }
    let (n, c, plane) = per_channel_layout(input);
    for (name, t) in [
        ("gamma", gamma),
        ("beta", beta),
        ("running_mean", running_mean),
        ("running_var", running_var),
    ] {
        if t.dims() != [c] {
            return shape_err(format!(
                "batchnorm {name} has dims {:?}, expected [{c}]",
                t.dims()
            ));
        }
    }

    let count = n * plane;
    let inv_count = T::from_f64(1.0 / count as f64);
    let eps = T::from_f64(BN_EPSILON);

    let (mean, var) = match mode {
        BnMode::Eval => (running_mean.data().to_vec(), running_var.data().to_vec()),
        BnMode::Train { .. } => {
            let mut mean = vec![T::zero(); c];
            let mut var = vec![T::zero(); c];
            let data = input.data();
            for ch in 0..c {
                let mut acc = T::zero();
                for img in 0..n {
                    let base = (img * c + ch) * plane;
                    for &x in &data[base..base + plane] {
                        acc += x;
                    }
                }
                let m = acc * inv_count;
                let mut vacc = T::zero();
                for img in 0..n {
                    let base = (img * c + ch) * plane;
                    for &x in &data[base..base + plane] {
                        let d = x - m;
                        vacc += d * d;
                    }
                }
                mean[ch] = m;
                var[ch] = vacc * inv_count;
            }
            (mean, var)
        }
    };

    if let BnMode::Train { update_running: true } = mode {
        let momentum = T::from_f64(BN_MOMENTUM);
        let keep = T::one() - momentum;
        for ch in 0..c {
            let rm = running_mean.data_mut();
            rm[ch] = keep * rm[ch] + momentum * mean[ch];
            let rv = running_var.data_mut();
            rv[ch] = keep * rv[ch] + momentum * var[ch];
        }
    }

    let mut output = Tensor::zeros(input.dims())?;
    let out = output.data_mut();
    let data = input.data();
    for img in 0..n {
        for ch in 0..c {
            let base = (img * c + ch) * plane;
            let inv_std = T::one() / (var[ch] + eps).sqrt();
            let g = gamma.data()[ch];
            let b = beta.data()[ch];
            for i in base..base + plane {
                out[i] = (data[i] - mean[ch]) * inv_std * g + b;
            }
        }
    }

    Ok((output, BatchNormState { mode, mean, var }))
}

#[derive(Debug)]
pub struct BatchNormGrads<T> {
    pub input: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

/// Backward pass for either mode. Train mode differentiates through the
/// batch statistics; eval mode treats the running statistics as constants.
pub fn batchnorm_backward<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    state: &BatchNormState<T>,
    grad_output: &Tensor<T>,
) -> Result<BatchNormGrads<T>> {
    if input.dims() != grad_output.dims() {
        return shape_err("batchnorm_backward: extents differ".to_string());
    }
    let (n, c, plane) = per_channel_layout(input);
    let count = n * plane;
    let inv_count = T::from_f64(1.0 / count as f64);
    let eps = T::from_f64(BN_EPSILON);

    let mut grad_input = Tensor::zeros(input.dims())?;
    let mut grad_gamma = Tensor::zeros(&[c])?;
    let mut grad_beta = Tensor::zeros(&[c])?;

    let x = input.data();
    let g = grad_output.data();

    for ch in 0..c {
        let mean = state.mean[ch];
        let inv_std = T::one() / (state.var[ch] + eps).sqrt();
        let gam = gamma.data()[ch];

        let mut sum_g = T::zero();
        let mut sum_g_xhat = T::zero();
        for img in 0..n {
            let base = (img * c + ch) * plane;
            for i in base..base + plane {
                let xhat = (x[i] - mean) * inv_std;
                sum_g += g[i];
                sum_g_xhat += g[i] * xhat;
            }
        }
        grad_gamma.data_mut()[ch] = sum_g_xhat;
        grad_beta.data_mut()[ch] = sum_g;

        let gin = grad_input.data_mut();
        match state.mode {
            BnMode::Eval => {
                for img in 0..n {
                    let base = (img * c + ch) * plane;
                    for i in base..base + plane {
                        gin[i] = g[i] * gam * inv_std;
                    }
                }
            }
            BnMode::Train { .. } => {
                // d/dx of ((x - mean(x)) / sqrt(var(x) + eps)) * gamma + beta
                let mean_g = sum_g * inv_count;
                let mean_g_xhat = sum_g_xhat * inv_count;
                for img in 0..n {
                    let base = (img * c + ch) * plane;
                    for i in base..base + plane {
                        let xhat = (x[i] - mean) * inv_std;
                        gin[i] = gam * inv_std * (g[i] - mean_g - xhat * mean_g_xhat);
                    }
                }
            }
        }
    }

    Ok(BatchNormGrads {
        input: grad_input,
        gamma: grad_gamma,
        beta: grad_beta,
    })
}
