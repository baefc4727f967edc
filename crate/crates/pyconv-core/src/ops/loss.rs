//! Softmax cross-entropy over `[N, K]` logits.

use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Mean negative log-likelihood of the labelled class, plus the gradient
/// with respect to the logits: `(softmax - onehot) / N`.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<(f64, Tensor<T>)> {
    if logits.rank() != 2 {
        return shape_err("softmax_cross_entropy expects [N, K] logits".to_string());
    }
    let (n, k) = (logits.dims()[0], logits.dims()[1]);
    if labels.len() != n {
        return shape_err(format!("{} labels for {} rows", labels.len(), n));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return shape_err(format!("label {bad} out of range 0..{k}"));
    }

    let mut grad = Tensor::zeros(&[n, k])?;
    let mut loss = 0.0f64;
    let inv_n = 1.0 / n as f64;
    for row in 0..n {
        let logit_row = &logits.data()[row * k..(row + 1) * k];
        let max = logit_row
            .iter()
            .fold(f64::NEG_INFINITY, |m, &x| m.max(x.to_f64()));
        let exps: Vec<f64> = logit_row.iter().map(|&x| (x.to_f64() - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let label = labels[row];
        loss -= (exps[label] / sum).ln() * inv_n;
        let grow = &mut grad.data_mut()[row * k..(row + 1) * k];
        for (j, slot) in grow.iter_mut().enumerate() {
            let p = exps[j] / sum;
            let y = if j == label { 1.0 } else { 0.0 };
            *slot = T::from_f64((p - y) * inv_n);
        }
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_cost_ln_k() {
        let logits = Tensor::<f64>::filled(&[4, 10], 0.3).unwrap();
        let (loss, _) = softmax_cross_entropy(&logits, &[0, 3, 5, 9]).unwrap();
        assert!((loss - (10.0f64).ln()).abs() < 1e-12, "loss {loss}");
    }

    #[test]
    fn dominant_logit_drives_loss_to_zero() {
        let mut logits = Tensor::<f64>::zeros(&[1, 5]).unwrap();
        logits.set(&[0, 2], 50.0);
        let (loss, _) = softmax_cross_entropy(&logits, &[2]).unwrap();
        assert!(loss < 1e-12, "loss {loss}");
    }

    #[test]
    fn gradient_rows_sum_to_zero() {
        let logits = Tensor::<f64>::he_normal(&[3, 7], 1, 80).unwrap();
        let (_, grad) = softmax_cross_entropy(&logits, &[1, 4, 6]).unwrap();
        for row in 0..3 {
            let s: f64 = grad.data()[row * 7..(row + 1) * 7].iter().sum();
            assert!(s.abs() < 1e-14, "row {row} sums to {s}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let logits = Tensor::<f64>::he_normal(&[2, 5], 1, 81).unwrap();
        let labels = [3usize, 0];
        let (_, grad) = softmax_cross_entropy(&logits, &labels).unwrap();
        let eps = 1e-6;
        for i in 0..logits.len() {
            let mut plus = logits.clone();
            plus.data_mut()[i] += eps;
            let mut minus = logits.clone();
            minus.data_mut()[i] -= eps;
            let (lp, _) = softmax_cross_entropy(&plus, &labels).unwrap();
            let (lm, _) = softmax_cross_entropy(&minus, &labels).unwrap();
            let fd = (lp - lm) / (2.0 * eps);
            assert!((fd - grad.data()[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn label_out_of_range_errors() {
        let logits = Tensor::<f64>::zeros(&[1, 3]).unwrap();
        assert!(softmax_cross_entropy(&logits, &[3]).is_err());
        assert!(softmax_cross_entropy(&logits, &[0, 1]).is_err());
    }
}
