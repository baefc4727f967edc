//! Bilinear resize with align-corners sampling.
//!
//! Source coordinate of output pixel `d` is `d * (In - 1) / (Out - 1)`
//! (0 when `Out == 1`), so the four image corners are preserved exactly.

use rayon::prelude::*;

use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn axis_taps(out: usize, input: usize) -> Vec<(usize, usize, f64)> {
    // (low index, high index, fraction toward high) per output position.
    (0..out)
        .map(|d| {
            if out == 1 || input == 1 {
                return (0, 0, 0.0);
            }
            let src = d as f64 * (input - 1) as f64 / (out - 1) as f64;
            let low = src.floor() as usize;
            let high = (low + 1).min(input - 1);
            (low, high, src - low as f64)
        })
        .collect()
}

pub fn bilinear_forward<T: Scalar>(input: &Tensor<T>, out_spatial: &[usize]) -> Result<Tensor<T>> {
    if input.rank() != 4 || out_spatial.len() != 2 {
        return shape_err("bilinear resize expects [N, C, H, W] input".to_string());
    }
    if out_spatial.iter().any(|&e| e == 0) {
        return shape_err("bilinear resize: zero output extent".to_string());
    }
    let (ih, iw) = (input.spatial()[0], input.spatial()[1]);
    let (oh, ow) = (out_spatial[0], out_spatial[1]);
    let ys = axis_taps(oh, ih);
    let xs = axis_taps(ow, iw);

    let n = input.batch();
    let c = input.channels();
    let mut output = Tensor::zeros(&[n, c, oh, ow])?;
    let in_data = input.data();
    output
        .data_mut()
        .par_chunks_mut(oh * ow)
        .enumerate()
        .for_each(|(plane_idx, out_plane)| {
            let plane = &in_data[plane_idx * ih * iw..(plane_idx + 1) * ih * iw];
            for (y, &(y0, y1, fy)) in ys.iter().enumerate() {
                for (x, &(x0, x1, fx)) in xs.iter().enumerate() {
                    let p00 = plane[y0 * iw + x0].to_f64();
                    let p01 = plane[y0 * iw + x1].to_f64();
                    let p10 = plane[y1 * iw + x0].to_f64();
                    let p11 = plane[y1 * iw + x1].to_f64();
                    let top = p00 * (1.0 - fx) + p01 * fx;
                    let bot = p10 * (1.0 - fx) + p11 * fx;
                    out_plane[y * ow + x] = T::from_f64(top * (1.0 - fy) + bot * fy);
                }
            }
        });
    Ok(output)
}

pub fn bilinear_backward<T: Scalar>(
    input_dims: &[usize],
    grad_output: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (ih, iw) = (input_dims[2], input_dims[3]);
    let (oh, ow) = (grad_output.spatial()[0], grad_output.spatial()[1]);
    let ys = axis_taps(oh, ih);
    let xs = axis_taps(ow, iw);

    let mut grad_input = Tensor::zeros(input_dims)?;
    let gout = grad_output.data();
    grad_input
        .data_mut()
        .par_chunks_mut(ih * iw)
        .enumerate()
        .for_each(|(plane_idx, gin_plane)| {
            let go = &gout[plane_idx * oh * ow..(plane_idx + 1) * oh * ow];
            for (y, &(y0, y1, fy)) in ys.iter().enumerate() {
                for (x, &(x0, x1, fx)) in xs.iter().enumerate() {
                    let g = go[y * ow + x].to_f64();
                    gin_plane[y0 * iw + x0] += T::from_f64(g * (1.0 - fx) * (1.0 - fy));
                    gin_plane[y0 * iw + x1] += T::from_f64(g * fx * (1.0 - fy));
                    gin_plane[y1 * iw + x0] += T::from_f64(g * (1.0 - fx) * fy);
                    gin_plane[y1 * iw + x1] += T::from_f64(g * fx * fy);
                }
            }
        });
    Ok(grad_input)
}
