//! Grouped n-dimensional convolution (cross-correlation, no kernel flip).
//!
//! Two execution paths compute the forward pass:
//!
//! - [`conv_forward_direct`]: the nested-loop reference definition,
//! - [`conv_forward`]: an im2col + matrix-multiply fast path.
//!
//! Both walk the kernel taps of every output element in the same
//! `(in_channel, tap...)` order, accumulating padded positions as explicit
//! `+= w * 0.0` steps, so the two paths agree bit-for-bit. The spatial rank
//! is generic: 2D `[N, C, H, W]` and 3D `[N, C, T, H, W]` share this code.

use rayon::prelude::*;

use super::{conv_out_extent, for_each_index};
use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Geometry of a grouped convolution.
///
/// Weights are `[out_channels, in_channels / groups, kernel...]`; output
/// channel `o` belongs to group `o / (out_channels / groups)` and reads the
/// contiguous input channel range of that group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel: Vec<usize>,
    pub stride: Vec<usize>,
    pub padding: Vec<usize>,
    pub dilation: Vec<usize>,
    pub groups: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub bias: bool,
}

impl ConvSpec {
    /// Spec with per-axis `padding = dilation * (kernel - 1) / 2`, which keeps
    /// the spatial extent at stride 1 for odd kernels.
    pub fn same_padded(
        kernel: &[usize],
        stride: &[usize],
        dilation: &[usize],
        groups: usize,
        in_channels: usize,
        out_channels: usize,
        bias: bool,
    ) -> Self {
        let padding = kernel
            .iter()
            .zip(dilation)
            .map(|(&k, &d)| d * (k - 1) / 2)
            .collect();
        Self {
            kernel: kernel.to_vec(),
            stride: stride.to_vec(),
            padding,
            dilation: dilation.to_vec(),
            groups,
            in_channels,
            out_channels,
            bias,
        }
    }

    pub fn spatial_rank(&self) -> usize {
        self.kernel.len()
    }

    /// Kernel taps per input channel.
    pub fn kernel_volume(&self) -> usize {
        self.kernel.iter().product()
    }

    pub fn weight_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.out_channels, self.in_channels / self.groups];
        dims.extend_from_slice(&self.kernel);
        dims
    }

    /// Learnable parameter count: `prod(K) * (Ci / G) * Co` plus bias.
    pub fn param_count(&self) -> usize {
        let w = self.kernel_volume() * (self.in_channels / self.groups) * self.out_channels;
        w + if self.bias { self.out_channels } else { 0 }
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.spatial_rank();
        if r == 0 || self.stride.len() != r || self.padding.len() != r || self.dilation.len() != r {
            return shape_err(format!(
                "conv spec axis counts disagree: kernel {:?} stride {:?} padding {:?} dilation {:?}",
                self.kernel, self.stride, self.padding, self.dilation
            ));
        }
        if self.kernel.iter().any(|&k| k == 0)
            || self.stride.iter().any(|&s| s == 0)
            || self.dilation.iter().any(|&d| d == 0)
        {
            return shape_err("conv spec has a zero kernel/stride/dilation extent".to_string());
        }
        if self.groups == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return shape_err("conv spec has zero channels or groups".to_string());
        }
        if self.in_channels % self.groups != 0 {
            return shape_err(format!(
                "groups {} must divide in_channels {}",
                self.groups, self.in_channels
            ));
        }
        if self.out_channels % self.groups != 0 {
            return shape_err(format!(
                "groups {} must divide out_channels {}",
                self.groups, self.out_channels
            ));
        }
        Ok(())
    }

    /// Output spatial extents for the given input spatial extents.
    pub fn out_spatial(&self, input_spatial: &[usize]) -> Result<Vec<usize>> {
        if input_spatial.len() != self.spatial_rank() {
            return shape_err(format!(
                "conv expects {} spatial axes, input has {}",
                self.spatial_rank(),
                input_spatial.len()
            ));
        }
        let mut out = Vec::with_capacity(input_spatial.len());
        for axis in 0..input_spatial.len() {
            match conv_out_extent(
                input_spatial[axis],
                self.kernel[axis],
                self.stride[axis],
                self.padding[axis],
                self.dilation[axis],
            ) {
                Some(e) => out.push(e),
                None => {
                    return shape_err(format!(
                        "kernel does not fit: axis {axis}, input {:?}, spec {:?}",
                        input_spatial, self
                    ))
                }
            }
        }
        Ok(out)
    }
}

/// For every output position and kernel tap, the flat source offset inside a
/// channel plane, or `PAD` for positions that fall into the zero padding.
/// Layout is tap-major: `src[tap * out_count + out_pos]`.
struct PatchTable {
    out_spatial: Vec<usize>,
    out_count: usize,
    kernel_volume: usize,
    src: Vec<usize>,
}

const PAD: usize = usize::MAX;

fn build_patch_table(input_spatial: &[usize], spec: &ConvSpec) -> Result<PatchTable> {
    let out_spatial = spec.out_spatial(input_spatial)?;
    let out_count: usize = out_spatial.iter().product();
    let kernel_volume = spec.kernel_volume();
    let mut src = vec![PAD; kernel_volume * out_count];
    for_each_index(&out_spatial, |out_idx, out_pos| {
        for_each_index(&spec.kernel, |tap_idx, tap| {
            let mut flat = 0usize;
            for axis in 0..out_idx.len() {
                let pos = (out_idx[axis] * spec.stride[axis] + tap_idx[axis] * spec.dilation[axis])
                    as isize
                    - spec.padding[axis] as isize;
                if pos < 0 || pos >= input_spatial[axis] as isize {
                    return;
                }
                flat = flat * input_spatial[axis] + pos as usize;
            }
            src[tap * out_count + out_pos] = flat;
        });
    });
    Ok(PatchTable {
        out_spatial,
        out_count,
        kernel_volume,
        src,
    })
}

fn check_forward_args<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    spec: &ConvSpec,
) -> Result<()> {
    spec.validate()?;
    if input.rank() != spec.spatial_rank() + 2 {
        return shape_err(format!(
            "conv input rank {} does not match spec rank {}",
            input.rank(),
            spec.spatial_rank() + 2
        ));
    }
    if input.channels() != spec.in_channels {
        return shape_err(format!(
            "conv input has {} channels, spec expects {}",
            input.channels(),
            spec.in_channels
        ));
    }
    if weights.dims() != spec.weight_dims().as_slice() {
        return shape_err(format!(
            "conv weights {:?} do not match spec {:?}",
            weights.dims(),
            spec.weight_dims()
        ));
    }
    match (bias, spec.bias) {
        (Some(b), true) if b.dims() != [spec.out_channels] => shape_err(format!(
            "conv bias {:?} does not match out_channels {}",
            b.dims(),
            spec.out_channels
        )),
        (None, true) => shape_err("conv spec requires a bias tensor".to_string()),
        (Some(_), false) => shape_err("conv spec does not take a bias tensor".to_string()),
        _ => Ok(()),
    }
}

/// im2col buffer for one (image, group) pair: `cols[k * out_count + out_pos]`
/// with `k = ic_local * kernel_volume + tap`.
fn fill_cols<T: Scalar>(
    plane_base: &[T],
    plane_len: usize,
    channels: usize,
    table: &PatchTable,
    cols: &mut [T],
) {
    let kk = table.kernel_volume;
    let oc = table.out_count;
    for ic in 0..channels {
        let plane = &plane_base[ic * plane_len..(ic + 1) * plane_len];
        for tap in 0..kk {
            let dst = &mut cols[(ic * kk + tap) * oc..(ic * kk + tap + 1) * oc];
            let src = &table.src[tap * oc..(tap + 1) * oc];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = if s == PAD { T::zero() } else { plane[s] };
            }
        }
    }
}

/// Fast path: im2col plus a plain matrix multiply.
pub fn conv_forward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    spec: &ConvSpec,
) -> Result<Tensor<T>> {
    check_forward_args(input, weights, bias, spec)?;
    let table = build_patch_table(input.spatial(), spec)?;
    let n = input.batch();
    let groups = spec.groups;
    let cg = spec.in_channels / groups;
    let ocg = spec.out_channels / groups;
    let plane_len: usize = input.spatial().iter().product();
    let out_count = table.out_count;
    let k_len = cg * table.kernel_volume;

    let mut out_dims = vec![n, spec.out_channels];
    out_dims.extend_from_slice(&table.out_spatial);
    let mut output = Tensor::zeros(&out_dims)?;

    let in_data = input.data();
    let w = weights.data();
    let b = bias.map(|b| b.data());

    // One contiguous output chunk per (image, group); chunks are disjoint.
    output
        .data_mut()
        .par_chunks_mut(ocg * out_count)
        .enumerate()
        .for_each(|(chunk_idx, out_chunk)| {
            let img = chunk_idx / groups;
            let g = chunk_idx % groups;
            let plane_base = &in_data[(img * spec.in_channels + g * cg) * plane_len..];
            let mut cols = vec![T::zero(); k_len * out_count];
            fill_cols(plane_base, plane_len, cg, &table, &mut cols);
            out_chunk
                .par_chunks_mut(out_count)
                .enumerate()
                .for_each(|(ocl, row)| {
                    let oc = g * ocg + ocl;
                    let w_row = &w[oc * k_len..(oc + 1) * k_len];
                    // k ascending per output element; identical order to the
                    // direct path.
                    for (k, &wk) in w_row.iter().enumerate() {
                        let col_row = &cols[k * out_count..(k + 1) * out_count];
                        for (acc, &x) in row.iter_mut().zip(col_row) {
                            *acc += wk * x;
                        }
                    }
                    if let Some(b) = b {
                        let bv = b[oc];
                        for acc in row.iter_mut() {
                            *acc += bv;
                        }
                    }
                });
        });
    Ok(output)
}

/// Reference path: direct nested loops over output elements and kernel taps.
pub fn conv_forward_direct<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    spec: &ConvSpec,
) -> Result<Tensor<T>> {
    check_forward_args(input, weights, bias, spec)?;
    let table = build_patch_table(input.spatial(), spec)?;
    let n = input.batch();
    let groups = spec.groups;
    let cg = spec.in_channels / groups;
    let ocg = spec.out_channels / groups;
    let plane_len: usize = input.spatial().iter().product();
    let out_count = table.out_count;
    let kk = table.kernel_volume;
    let k_len = cg * kk;

    let mut out_dims = vec![n, spec.out_channels];
    out_dims.extend_from_slice(&table.out_spatial);
    let mut output = Tensor::zeros(&out_dims)?;

    let in_data = input.data();
    let w = weights.data();
    let b = bias.map(|b| b.data());

    output
        .data_mut()
        .par_chunks_mut(out_count)
        .enumerate()
        .for_each(|(plane_idx, out_plane)| {
            let img = plane_idx / spec.out_channels;
            let oc = plane_idx % spec.out_channels;
            let g = oc / ocg;
            let w_row = &w[oc * k_len..(oc + 1) * k_len];
            let group_base = &in_data[(img * spec.in_channels + g * cg) * plane_len..];
            for (out_pos, acc_slot) in out_plane.iter_mut().enumerate() {
                let mut acc = T::zero();
                for ic in 0..cg {
                    let plane = &group_base[ic * plane_len..(ic + 1) * plane_len];
                    for tap in 0..kk {
                        let s = table.src[tap * out_count + out_pos];
                        let x = if s == PAD { T::zero() } else { plane[s] };
                        acc += w_row[ic * kk + tap] * x;
                    }
                }
                if let Some(b) = b {
                    acc += b[oc];
                }
                *acc_slot = acc;
            }
        });
    Ok(output)
}

#[derive(Debug)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

/// Analytic adjoint of the forward pass.
pub fn conv_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    spec: &ConvSpec,
    grad_output: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    spec.validate()?;
    if input.channels() != spec.in_channels || weights.dims() != spec.weight_dims().as_slice() {
        return shape_err("conv_backward: input/weights do not match spec".to_string());
    }
    let table = build_patch_table(input.spatial(), spec)?;
    let mut expect = vec![input.batch(), spec.out_channels];
    expect.extend_from_slice(&table.out_spatial);
    if grad_output.dims() != expect.as_slice() {
        return shape_err(format!(
            "conv_backward: grad_output {:?} does not match forward output {:?}",
            grad_output.dims(),
            expect
        ));
    }

    let n = input.batch();
    let groups = spec.groups;
    let cg = spec.in_channels / groups;
    let ocg = spec.out_channels / groups;
    let plane_len: usize = input.spatial().iter().product();
    let out_count = table.out_count;
    let kk = table.kernel_volume;
    let k_len = cg * kk;

    let in_data = input.data();
    let w = weights.data();
    let gout = grad_output.data();

    let mut grad_input = Tensor::zeros(input.dims())?;
    let mut grad_weights = Tensor::zeros(weights.dims())?;
    let gw = grad_weights.data_mut();

    let mut cols = vec![T::zero(); k_len * out_count];
    let mut gcols = vec![T::zero(); k_len * out_count];

    for img in 0..n {
        for g in 0..groups {
            let gout_base = &gout[(img * spec.out_channels + g * ocg) * out_count..];

            // gcols = W^T * gout; each row k accumulates over oc ascending.
            gcols
                .par_chunks_mut(out_count)
                .enumerate()
                .for_each(|(k, row)| {
                    row.fill(T::zero());
                    for ocl in 0..ocg {
                        let wk = w[(g * ocg + ocl) * k_len + k];
                        let go = &gout_base[ocl * out_count..(ocl + 1) * out_count];
                        for (acc, &gv) in row.iter_mut().zip(go) {
                            *acc += wk * gv;
                        }
                    }
                });

            // col2im scatter, one disjoint input-channel plane per task;
            // taps and output positions are walked in fixed ascending order.
            let gcols_ref = &gcols;
            let table_ref = &table;
            grad_input.data_mut()[(img * spec.in_channels + g * cg) * plane_len..]
                [..cg * plane_len]
                .par_chunks_mut(plane_len)
                .enumerate()
                .for_each(|(ic, plane)| {
                    for tap in 0..kk {
                        let grow = &gcols_ref[(ic * kk + tap) * out_count..][..out_count];
                        let srow = &table_ref.src[tap * out_count..(tap + 1) * out_count];
                        for (&s, &gv) in srow.iter().zip(grow) {
                            if s != PAD {
                                plane[s] += gv;
                            }
                        }
                    }
                });

            // grad_weights row oc: sum over output positions, images ascending
            // because the image loop is the outermost.
            let plane_base = &in_data[(img * spec.in_channels + g * cg) * plane_len..];
            fill_cols(plane_base, plane_len, cg, &table, &mut cols);
            let cols_ref = &cols;
            gw[(g * ocg) * k_len..(g + 1) * ocg * k_len]
                .par_chunks_mut(k_len)
                .enumerate()
                .for_each(|(ocl, wrow)| {
                    let go = &gout_base[ocl * out_count..(ocl + 1) * out_count];
                    for (k, slot) in wrow.iter_mut().enumerate() {
                        let crow = &cols_ref[k * out_count..(k + 1) * out_count];
                        let mut acc = T::zero();
                        for (&gv, &x) in go.iter().zip(crow) {
                            acc += gv * x;
                        }
                        *slot += acc;
                    }
                });
        }
    }

    let grad_bias = if spec.bias {
        let mut gb = Tensor::zeros(&[spec.out_channels])?;
        let gbd = gb.data_mut();
        for img in 0..n {
            for oc in 0..spec.out_channels {
                let go = &gout[(img * spec.out_channels + oc) * out_count..][..out_count];
                let mut acc = T::zero();
                for &gv in go {
                    acc += gv;
                }
                gbd[oc] += acc;
            }
        }
        Some(gb)
    } else {
        None
    };

    Ok(ConvGrads {
        input: grad_input,
        weights: grad_weights,
        bias: grad_bias,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec2d(k: usize, s: usize, p: usize, g: usize, ci: usize, co: usize) -> ConvSpec {
        ConvSpec {
            kernel: vec![k, k],
            stride: vec![s, s],
            padding: vec![p, p],
            dilation: vec![1, 1],
            groups: g,
            in_channels: ci,
            out_channels: co,
            bias: false,
        }
    }

    #[test]
    fn one_by_one_identity_weights_copy_the_input() {
        let c = 5;
        let input = Tensor::<f32>::he_normal(&[2, c, 4, 4], 9, 3).unwrap();
        let mut w = Tensor::<f32>::zeros(&[c, c, 1, 1]).unwrap();
        for i in 0..c {
            w.set(&[i, i, 0, 0], 1.0);
        }
        let out = conv_forward(&input, &w, None, &spec2d(1, 1, 0, 1, c, c)).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn ones_kernel_counts_overlap() {
        // all-ones 5x5 input, all-ones 3x3 kernel, pad 1: the center output
        // sees the full 3x3 window (9.0), a corner only a 2x2 window (4.0).
        let input = Tensor::<f32>::filled(&[1, 1, 5, 5], 1.0).unwrap();
        let w = Tensor::<f32>::filled(&[1, 1, 3, 3], 1.0).unwrap();
        let out = conv_forward(&input, &w, None, &spec2d(3, 1, 1, 1, 1, 1)).unwrap();
        assert_eq!(out.dims(), &[1, 1, 5, 5]);
        assert_eq!(out.get(&[0, 0, 2, 2]), 9.0);
        assert_eq!(out.get(&[0, 0, 0, 0]), 4.0);
        assert_eq!(out.get(&[0, 0, 0, 2]), 6.0);
    }

    #[test]
    fn grouped_conv_equals_concat_of_per_group_convs() {
        let spec = spec2d(3, 1, 1, 2, 8, 6);
        let input = Tensor::<f32>::he_normal(&[2, 8, 5, 5], 72, 1).unwrap();
        let w = Tensor::<f32>::he_normal(&spec.weight_dims(), 36, 2).unwrap();
        let out = conv_forward(&input, &w, None, &spec).unwrap();

        let mut halves = Vec::new();
        for g in 0..2 {
            let in_g = input.slice_channels(g * 4, 4).unwrap();
            let w_g = Tensor::from_vec(
                &[3, 4, 3, 3],
                w.data()[g * 3 * 4 * 9..(g + 1) * 3 * 4 * 9].to_vec(),
            )
            .unwrap();
            halves.push(conv_forward_direct(&in_g, &w_g, None, &spec2d(3, 1, 1, 1, 4, 3)).unwrap());
        }
        let expect = Tensor::concat_channels(&[&halves[0], &halves[1]]).unwrap();
        assert_eq!(out, expect);
    }

    #[test]
    fn fast_path_matches_direct_path_bitwise() {
        for (k, s, p, d, g, ci, co, h, w) in [
            (3usize, 1usize, 1usize, 1usize, 1usize, 4usize, 6usize, 7usize, 7usize),
            (3, 2, 1, 1, 2, 8, 8, 9, 11),
            (5, 1, 2, 1, 4, 8, 12, 8, 8),
            (3, 1, 2, 2, 1, 3, 5, 9, 9),
            (1, 1, 0, 1, 1, 7, 3, 6, 5),
            (9, 2, 4, 1, 16, 16, 16, 12, 12),
        ] {
            let spec = ConvSpec {
                kernel: vec![k, k],
                stride: vec![s, s],
                padding: vec![p, p],
                dilation: vec![d, d],
                groups: g,
                in_channels: ci,
                out_channels: co,
                bias: true,
            };
            let input = Tensor::<f32>::he_normal(&[2, ci, h, w], 9, 5).unwrap();
            let wts = Tensor::<f32>::he_normal(&spec.weight_dims(), k * k * ci, 6).unwrap();
            let bias = Tensor::<f32>::he_normal(&[co], co, 7).unwrap();
            let a = conv_forward(&input, &wts, Some(&bias), &spec).unwrap();
            let b = conv_forward_direct(&input, &wts, Some(&bias), &spec).unwrap();
            assert_eq!(a, b, "paths diverge for k={k} s={s} p={p} d={d} g={g}");
        }
    }

    #[test]
    fn shape_law_over_grid() {
        for k in [1usize, 3, 5] {
            for s in [1usize, 2, 3] {
                for p in [0usize, 1, 2] {
                    for d in [1usize, 2] {
                        let span = d * (k - 1) + 1;
                        let input_h = 13;
                        if input_h + 2 * p < span {
                            continue;
                        }
                        let spec = ConvSpec {
                            kernel: vec![k, k],
                            stride: vec![s, s],
                            padding: vec![p, p],
                            dilation: vec![d, d],
                            groups: 1,
                            in_channels: 2,
                            out_channels: 3,
                            bias: false,
                        };
                        let input = Tensor::<f32>::he_normal(&[1, 2, input_h, input_h], 4, 8).unwrap();
                        let w = Tensor::<f32>::he_normal(&spec.weight_dims(), 4, 9).unwrap();
                        let out = conv_forward(&input, &w, None, &spec).unwrap();
                        let expect = (input_h + 2 * p - span) / s + 1;
                        assert_eq!(out.spatial(), &[expect, expect]);
                    }
                }
            }
        }
    }

    #[test]
    fn kernel_larger_than_padded_input_errors() {
        let spec = spec2d(5, 1, 0, 1, 1, 1);
        let input = Tensor::<f32>::zeros(&[1, 1, 3, 3]).unwrap();
        let w = Tensor::<f32>::zeros(&spec.weight_dims()).unwrap();
        assert!(conv_forward(&input, &w, None, &spec).is_err());
    }

    #[test]
    fn group_divisibility_is_enforced() {
        let mut spec = spec2d(3, 1, 1, 3, 8, 6);
        assert!(spec.validate().is_err());
        spec.groups = 2;
        assert!(spec.validate().is_ok());
    }

    #[test]
    fn zero_grad_output_gives_zero_grads() {
        let spec = spec2d(3, 1, 1, 1, 3, 4);
        let input = Tensor::<f32>::he_normal(&[1, 3, 5, 5], 27, 1).unwrap();
        let w = Tensor::<f32>::he_normal(&spec.weight_dims(), 27, 2).unwrap();
        let gout = Tensor::<f32>::zeros(&[1, 4, 5, 5]).unwrap();
        let grads = conv_backward(&input, &w, &spec, &gout).unwrap();
        assert!(grads.input.data().iter().all(|&x| x == 0.0));
        assert!(grads.weights.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn identity_conv_passes_grad_through() {
        let c = 4;
        let spec = spec2d(1, 1, 0, 1, c, c);
        let input = Tensor::<f32>::he_normal(&[2, c, 3, 3], 4, 3).unwrap();
        let mut w = Tensor::<f32>::zeros(&[c, c, 1, 1]).unwrap();
        for i in 0..c {
            w.set(&[i, i, 0, 0], 1.0);
        }
        let gout = Tensor::<f32>::he_normal(&[2, c, 3, 3], 4, 4).unwrap();
        let grads = conv_backward(&input, &w, &spec, &gout).unwrap();
        assert_eq!(grads.input, gout);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let spec = ConvSpec {
            kernel: vec![3, 3],
            stride: vec![2, 2],
            padding: vec![1, 1],
            dilation: vec![1, 1],
            groups: 2,
            in_channels: 4,
            out_channels: 6,
            bias: true,
        };
        let input = Tensor::<f64>::he_normal(&[2, 4, 6, 6], 18, 10).unwrap();
        let w = Tensor::<f64>::he_normal(&spec.weight_dims(), 18, 11).unwrap();
        let b = Tensor::<f64>::he_normal(&[6], 6, 12).unwrap();
        // Loss = weighted sum of outputs; weights fixed by the rng stream.
        let out = conv_forward(&input, &w, Some(&b), &spec).unwrap();
        let lw = Tensor::<f64>::he_normal(out.dims(), 1, 13).unwrap();
        let loss = |o: &Tensor<f64>| -> f64 {
            o.data().iter().zip(lw.data()).map(|(&a, &b)| a * b).sum()
        };
        let grads = conv_backward(&input, &w, &spec, &lw).unwrap();

        let eps = 1e-4;
        let mut worst = 0.0f64;
        for i in (0..input.len()).step_by(7) {
            let mut plus = input.clone();
            plus.data_mut()[i] += eps;
            let mut minus = input.clone();
            minus.data_mut()[i] -= eps;
            let fd = (loss(&conv_forward(&plus, &w, Some(&b), &spec).unwrap())
                - loss(&conv_forward(&minus, &w, Some(&b), &spec).unwrap()))
                / (2.0 * eps);
            let an = grads.input.data()[i];
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
            worst = worst.max(rel);
        }
        for i in (0..w.len()).step_by(5) {
            let mut plus = w.clone();
            plus.data_mut()[i] += eps;
            let mut minus = w.clone();
            minus.data_mut()[i] -= eps;
            let fd = (loss(&conv_forward(&input, &plus, Some(&b), &spec).unwrap())
                - loss(&conv_forward(&input, &minus, Some(&b), &spec).unwrap()))
                / (2.0 * eps);
            let an = grads.weights.data()[i];
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
            worst = worst.max(rel);
        }
        assert!(worst <= 1e-5, "worst relative error {worst}");
    }

    #[test]
    fn conv3d_with_unit_temporal_kernel_matches_per_frame_2d() {
        let spec3 = ConvSpec {
            kernel: vec![1, 3, 3],
            stride: vec![1, 1, 1],
            padding: vec![0, 1, 1],
            dilation: vec![1, 1, 1],
            groups: 1,
            in_channels: 3,
            out_channels: 5,
            bias: false,
        };
        let input = Tensor::<f32>::he_normal(&[1, 3, 4, 6, 6], 27, 20).unwrap();
        let w3 = Tensor::<f32>::he_normal(&spec3.weight_dims(), 27, 21).unwrap();
        let out3 = conv_forward(&input, &w3, None, &spec3).unwrap();

        let spec2 = spec2d(3, 1, 1, 1, 3, 5);
        let w2 = Tensor::from_vec(&[5, 3, 3, 3], w3.data().to_vec()).unwrap();
        for t in 0..4 {
            // Assemble frame t as [1, 3, 6, 6].
            let mut frame = Tensor::<f32>::zeros(&[1, 3, 6, 6]).unwrap();
            for c in 0..3 {
                for h in 0..6 {
                    for wx in 0..6 {
                        frame.set(&[0, c, h, wx], input.get(&[0, c, t, h, wx]));
                    }
                }
            }
            let out2 = conv_forward(&frame, &w2, None, &spec2).unwrap();
            for c in 0..5 {
                for h in 0..6 {
                    for wx in 0..6 {
                        assert_eq!(out2.get(&[0, c, h, wx]), out3.get(&[0, c, t, h, wx]));
                    }
                }
            }
        }
    }

    #[test]
    fn depthwise_conv3d_matches_per_channel_oracle() {
        let c = 4;
        let spec = ConvSpec {
            kernel: vec![3, 3, 3],
            stride: vec![1, 1, 1],
            padding: vec![1, 1, 1],
            dilation: vec![1, 1, 1],
            groups: c,
            in_channels: c,
            out_channels: c,
            bias: false,
        };
        let input = Tensor::<f32>::he_normal(&[1, c, 4, 5, 5], 27, 30).unwrap();
        let w = Tensor::<f32>::he_normal(&spec.weight_dims(), 27, 31).unwrap();
        let out = conv_forward(&input, &w, None, &spec).unwrap();
        for ch in 0..c {
            let in_c = input.slice_channels(ch, 1).unwrap();
            let w_c = Tensor::from_vec(&[1, 1, 3, 3, 3], w.data()[ch * 27..(ch + 1) * 27].to_vec())
                .unwrap();
            let single = ConvSpec {
                groups: 1,
                in_channels: 1,
                out_channels: 1,
                ..spec.clone()
            };
            let expect = conv_forward_direct(&in_c, &w_c, None, &single).unwrap();
            assert_eq!(out.slice_channels(ch, 1).unwrap(), expect);
        }
    }
}
