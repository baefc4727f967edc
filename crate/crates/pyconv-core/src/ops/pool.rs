//! Pooling kernels: max pooling, adaptive average pooling and global
//! average pooling, with backward passes.

use rayon::prelude::*;

use super::{conv_out_extent, for_each_index};
use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Max-pool window geometry (any spatial rank).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolSpec {
    pub window: Vec<usize>,
    pub stride: Vec<usize>,
    pub padding: Vec<usize>,
}

impl PoolSpec {
    pub fn out_spatial(&self, input_spatial: &[usize]) -> Result<Vec<usize>> {
        if input_spatial.len() != self.window.len() {
            return shape_err(format!(
                "pool expects {} spatial axes, input has {}",
                self.window.len(),
                input_spatial.len()
            ));
        }
        let mut out = Vec::new();
        for axis in 0..input_spatial.len() {
            match conv_out_extent(
                input_spatial[axis],
                self.window[axis],
                self.stride[axis],
                self.padding[axis],
                1,
            ) {
                Some(e) => out.push(e),
                None => {
                    return shape_err(format!(
                        "pool window larger than padded input on axis {axis}: input {:?}, spec {:?}",
                        input_spatial, self
                    ))
                }
            }
        }
        Ok(out)
    }
}

/// Max pooling. Returns the pooled tensor and, per output element, the flat
/// index of its source element inside the whole input buffer. Ties take the
/// lowest flat index; padding never wins.
pub fn maxpool_forward<T: Scalar>(
    input: &Tensor<T>,
    spec: &PoolSpec,
) -> Result<(Tensor<T>, Vec<usize>)> {
    let out_spatial = spec.out_spatial(input.spatial())?;
    let n = input.batch();
    let c = input.channels();
    let in_spatial = input.spatial().to_vec();
    let plane_len: usize = in_spatial.iter().product();
    let out_count: usize = out_spatial.iter().product();

    let mut out_dims = vec![n, c];
    out_dims.extend_from_slice(&out_spatial);
    let mut output = Tensor::zeros(&out_dims)?;
    let mut argmax = vec![usize::MAX; n * c * out_count];

    let in_data = input.data();
    output
        .data_mut()
        .par_chunks_mut(out_count)
        .zip(argmax.par_chunks_mut(out_count))
        .enumerate()
        .for_each(|(plane_idx, (out_plane, arg_plane))| {
            let plane = &in_data[plane_idx * plane_len..(plane_idx + 1) * plane_len];
            for_each_index(&out_spatial, |out_idx, out_pos| {
                let mut best = T::neg_infinity();
                let mut best_at = usize::MAX;
                for_each_index(&spec.window, |tap_idx, _| {
                    let mut flat = 0usize;
                    for axis in 0..out_idx.len() {
                        let pos = (out_idx[axis] * spec.stride[axis] + tap_idx[axis]) as isize
                            - spec.padding[axis] as isize;
                        if pos < 0 || pos >= in_spatial[axis] as isize {
                            return;
                        }
                        flat = flat * in_spatial[axis] + pos as usize;
                    }
                    if plane[flat] > best {
                        best = plane[flat];
                        best_at = flat;
                    }
                });
                assert!(best_at != usize::MAX, "pool window fell entirely in padding");
                out_plane[out_pos] = best;
                arg_plane[out_pos] = plane_idx * plane_len + best_at;
            });
        });
    Ok((output, argmax))
}

/// Scatters the output gradient back to the argmax positions.
pub fn maxpool_backward<T: Scalar>(
    input_dims: &[usize],
    argmax: &[usize],
    grad_output: &Tensor<T>,
) -> Result<Tensor<T>> {
    if argmax.len() != grad_output.len() {
        return shape_err("maxpool_backward: argmax/grad_output length mismatch".to_string());
    }
    let mut grad_input = Tensor::zeros(input_dims)?;
    let gin = grad_input.data_mut();
    for (&src, &g) in argmax.iter().zip(grad_output.data()) {
        gin[src] += g;
    }
    Ok(grad_input)
}

fn adaptive_bin(axis_out: usize, axis_in: usize, i: usize) -> (usize, usize) {
    let start = i * axis_in / axis_out;
    let end = ((i + 1) * axis_in + axis_out - 1) / axis_out;
    (start, end)
}

/// Adaptive average pooling to fixed output extents; output bin `i` on an
/// axis averages input rows `[floor(i*In/Out), ceil((i+1)*In/Out))`.
pub fn adaptive_avg_pool_forward<T: Scalar>(
    input: &Tensor<T>,
    out_spatial: &[usize],
) -> Result<Tensor<T>> {
    let in_spatial = input.spatial().to_vec();
    if out_spatial.len() != in_spatial.len() {
        return shape_err("adaptive_avg_pool: rank mismatch".to_string());
    }
    if out_spatial.iter().any(|&e| e == 0) {
        return shape_err("adaptive_avg_pool: zero output extent".to_string());
    }
    for (o, i) in out_spatial.iter().zip(&in_spatial) {
        if o > i {
            return shape_err(format!(
                "adaptive_avg_pool: output {out_spatial:?} exceeds input {in_spatial:?}"
            ));
        }
    }
    let n = input.batch();
    let c = input.channels();
    let plane_len: usize = in_spatial.iter().product();
    let out_count: usize = out_spatial.iter().product();
    let mut out_dims = vec![n, c];
    out_dims.extend_from_slice(out_spatial);
    let mut output = Tensor::zeros(&out_dims)?;

    let in_data = input.data();
    output
        .data_mut()
        .par_chunks_mut(out_count)
        .enumerate()
        .for_each(|(plane_idx, out_plane)| {
            let plane = &in_data[plane_idx * plane_len..(plane_idx + 1) * plane_len];
            for_each_index(out_spatial, |out_idx, out_pos| {
                let bins: Vec<(usize, usize)> = out_idx
                    .iter()
                    .enumerate()
                    .map(|(axis, &i)| adaptive_bin(out_spatial[axis], in_spatial[axis], i))
                    .collect();
                let extents: Vec<usize> = bins.iter().map(|(s, e)| e - s).collect();
                let mut acc = T::zero();
                for_each_index(&extents, |off, _| {
                    let mut flat = 0usize;
                    for axis in 0..off.len() {
                        flat = flat * in_spatial[axis] + bins[axis].0 + off[axis];
                    }
                    acc += plane[flat];
                });
                let count: usize = extents.iter().product();
                out_plane[out_pos] = acc / T::from_f64(count as f64);
            });
        });
    Ok(output)
}

pub fn adaptive_avg_pool_backward<T: Scalar>(
    input_dims: &[usize],
    grad_output: &Tensor<T>,
) -> Result<Tensor<T>> {
    let in_spatial = input_dims[2..].to_vec();
    let out_spatial = grad_output.spatial().to_vec();
    let plane_len: usize = in_spatial.iter().product();
    let out_count: usize = out_spatial.iter().product();
    let mut grad_input = Tensor::zeros(input_dims)?;

    let gout = grad_output.data();
    grad_input
        .data_mut()
        .par_chunks_mut(plane_len)
        .enumerate()
        .for_each(|(plane_idx, gin_plane)| {
            let go = &gout[plane_idx * out_count..(plane_idx + 1) * out_count];
            for_each_index(&out_spatial, |out_idx, out_pos| {
                let bins: Vec<(usize, usize)> = out_idx
                    .iter()
                    .enumerate()
                    .map(|(axis, &i)| adaptive_bin(out_spatial[axis], in_spatial[axis], i))
                    .collect();
                let extents: Vec<usize> = bins.iter().map(|(s, e)| e - s).collect();
                let count: usize = extents.iter().product();
                let share = go[out_pos] / T::from_f64(count as f64);
                for_each_index(&extents, |off, _| {
                    let mut flat = 0usize;
                    for axis in 0..off.len() {
                        flat = flat * in_spatial[axis] + bins[axis].0 + off[axis];
                    }
                    gin_plane[flat] += share;
                });
            });
        });
    Ok(grad_input)
}

/// Mean over all spatial positions; output is `[N, C]`.
pub fn global_avg_pool_forward<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let n = input.batch();
    let c = input.channels();
    let plane_len: usize = input.spatial().iter().product();
    let mut output = Tensor::zeros(&[n, c])?;
    let in_data = input.data();
    let inv = T::from_f64(1.0 / plane_len as f64);
    for (plane_idx, slot) in output.data_mut().iter_mut().enumerate() {
        let plane = &in_data[plane_idx * plane_len..(plane_idx + 1) * plane_len];
        let mut acc = T::zero();
        for &x in plane {
            acc += x;
        }
        *slot = acc * inv;
    }
    Ok(output)
}

pub fn global_avg_pool_backward<T: Scalar>(
    input_dims: &[usize],
    grad_output: &Tensor<T>,
) -> Result<Tensor<T>> {
    let plane_len: usize = input_dims[2..].iter().product();
    let mut grad_input = Tensor::zeros(input_dims)?;
    let inv = T::from_f64(1.0 / plane_len as f64);
    for (plane, &g) in grad_input
        .data_mut()
        .chunks_mut(plane_len)
        .zip(grad_output.data())
    {
        let share = g * inv;
        for slot in plane {
            *slot = share;
        }
    }
    Ok(grad_input)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool2(w: usize, s: usize, p: usize) -> PoolSpec {
        PoolSpec {
            window: vec![w, w],
            stride: vec![s, s],
            padding: vec![p, p],
        }
    }

    #[test]
    fn counting_input_pools_to_window_maxima() {
        // 4x4 input 0..15, 2x2 window stride 2 -> [[5,7],[13,15]].
        let input = Tensor::from_vec(&[1, 1, 4, 4], (0..16).map(|x| x as f32).collect()).unwrap();
        let (out, arg) = maxpool_forward(&input, &pool2(2, 2, 0)).unwrap();
        assert_eq!(out.data(), &[5.0, 7.0, 13.0, 15.0]);
        assert_eq!(arg, vec![5, 7, 13, 15]);
    }

    #[test]
    fn constant_input_keeps_value_and_routes_grad_to_first_cell() {
        let input = Tensor::<f32>::filled(&[1, 1, 4, 4], 2.5).unwrap();
        let (out, arg) = maxpool_forward(&input, &pool2(2, 2, 0)).unwrap();
        assert!(out.data().iter().all(|&x| x == 2.5));
        // Ties break to the lowest flat index: the top-left cell of each window.
        assert_eq!(arg, vec![0, 2, 8, 10]);
        let gout = Tensor::<f32>::filled(out.dims(), 1.0).unwrap();
        let gin = maxpool_backward(input.dims(), &arg, &gout).unwrap();
        assert_eq!(gin.get(&[0, 0, 0, 0]), 1.0);
        assert_eq!(gin.get(&[0, 0, 0, 1]), 0.0);
        let total: f32 = gin.data().iter().sum();
        assert_eq!(total, 4.0);
    }

    #[test]
    fn random_pool_matches_nested_loop_oracle() {
        let input = Tensor::<f32>::he_normal(&[2, 3, 7, 9], 4, 17).unwrap();
        let spec = pool2(3, 2, 1);
        let (out, _) = maxpool_forward(&input, &spec).unwrap();
        let (oh, ow) = (4, 5);
        assert_eq!(out.spatial(), &[oh, ow]);
        for n in 0..2 {
            for c in 0..3 {
                for y in 0..oh {
                    for x in 0..ow {
                        let mut best = f32::NEG_INFINITY;
                        for ky in 0..3usize {
                            for kx in 0..3usize {
                                let iy = (y * 2 + ky) as isize - 1;
                                let ix = (x * 2 + kx) as isize - 1;
                                if iy < 0 || iy >= 7 || ix < 0 || ix >= 9 {
                                    continue;
                                }
                                best = best.max(input.get(&[n, c, iy as usize, ix as usize]));
                            }
                        }
                        assert_eq!(out.get(&[n, c, y, x]), best);
                    }
                }
            }
        }
    }

    #[test]
    fn oversized_window_errors() {
        let input = Tensor::<f32>::zeros(&[1, 1, 3, 3]).unwrap();
        assert!(maxpool_forward(&input, &pool2(5, 1, 0)).is_err());
    }

    #[test]
    fn adaptive_identity_when_out_equals_in() {
        let input = Tensor::<f32>::he_normal(&[1, 2, 5, 5], 4, 40).unwrap();
        let out = adaptive_avg_pool_forward(&input, &[5, 5]).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn adaptive_constant_input_stays_constant() {
        let input = Tensor::<f32>::filled(&[1, 1, 60, 60], 3.25).unwrap();
        let out = adaptive_avg_pool_forward(&input, &[9, 9]).unwrap();
        assert_eq!(out.dims(), &[1, 1, 9, 9]);
        assert!(out.data().iter().all(|&x| x == 3.25));
    }

    #[test]
    fn adaptive_one_by_one_is_global_mean() {
        let input = Tensor::<f64>::he_normal(&[2, 3, 4, 6], 4, 41).unwrap();
        let out = adaptive_avg_pool_forward(&input, &[1, 1]).unwrap();
        let gap = global_avg_pool_forward(&input).unwrap();
        for i in 0..6 {
            assert!((out.data()[i] - gap.data()[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn adaptive_rejects_upsampling_and_zero_extent() {
        let input = Tensor::<f32>::zeros(&[1, 1, 4, 4]).unwrap();
        assert!(adaptive_avg_pool_forward(&input, &[5, 4]).is_err());
        assert!(adaptive_avg_pool_forward(&input, &[0, 4]).is_err());
    }

    #[test]
    fn adaptive_backward_conserves_gradient_mass() {
        let input = Tensor::<f64>::he_normal(&[1, 2, 7, 7], 4, 42).unwrap();
        let out = adaptive_avg_pool_forward(&input, &[3, 3]).unwrap();
        let gout = Tensor::<f64>::filled(out.dims(), 1.0).unwrap();
        let gin = adaptive_avg_pool_backward(input.dims(), &gout).unwrap();
        let mass: f64 = gin.data().iter().sum();
        assert!((mass - 18.0).abs() < 1e-12, "mass {mass}");
    }

    #[test]
    fn global_avg_pool_roundtrip() {
        let input = Tensor::<f32>::he_normal(&[2, 4, 3, 3], 4, 43).unwrap();
        let out = global_avg_pool_forward(&input).unwrap();
        assert_eq!(out.dims(), &[2, 4]);
        let gout = Tensor::<f32>::he_normal(&[2, 4], 4, 44).unwrap();
        let gin = global_avg_pool_backward(input.dims(), &gout).unwrap();
        assert_eq!(gin.get(&[1, 2, 0, 0]), gout.get(&[1, 2]) / 9.0);
    }
}
