//! The pyramidal convolution layer.
//!
//! A PyConv runs `n` parallel convolutions ("levels") over the full input.
//! Level kernel sizes increase from bottom to top while the group counts
//! grow with them, so kernel depth (connectivity) shrinks as the receptive
//! field widens. Level outputs are concatenated channel-wise in ascending
//! kernel order.
//!
//! With the ideal group ratio `G_n = K_n^2 / K_1^2` the layer costs exactly
//! as much as a single `K_1 x K_1` convolution with the same channel counts;
//! the practical schedule rounds each ratio up to a power-of-two divisor of
//! the input channels, which can only cheapen the layer.

use crate::error::{spec_err, Result};
use crate::ops::{conv_backward, conv_forward, ConvGrads, ConvSpec};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// One pyramid level: kernel extents (per spatial axis), its share of the
/// output channels, and its group count. Padding is implied same-padding,
/// `(K - 1) / 2 * dilation` per axis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PyConvLevel {
    pub kernel: Vec<usize>,
    pub out_channels: usize,
    pub groups: usize,
}

impl PyConvLevel {
    pub fn square(kernel: usize, out_channels: usize, groups: usize) -> Self {
        Self {
            kernel: vec![kernel, kernel],
            out_channels,
            groups,
        }
    }

    /// Spatial size used for ordering and for the group-schedule ratios
    /// (the height/width extent; a 3D level's temporal extent does not
    /// participate).
    pub fn spatial_size(&self) -> usize {
        self.kernel[self.kernel.len() - 1]
    }
}

/// Full layer specification. Levels are ordered bottom (smallest kernel) to
/// top; every level consumes all input channels; the stride and dilation are
/// shared by all levels so the per-level outputs stay concatenable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PyConvSpec {
    pub in_channels: usize,
    pub stride: Vec<usize>,
    pub dilation: Vec<usize>,
    pub levels: Vec<PyConvLevel>,
}

impl PyConvSpec {
    pub fn new(in_channels: usize, stride: Vec<usize>, levels: Vec<PyConvLevel>) -> Self {
        let rank = levels.first().map_or(2, |l| l.kernel.len());
        Self {
            in_channels,
            stride,
            dilation: vec![1; rank],
            levels,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.levels.iter().map(|l| l.out_channels).sum()
    }

    pub fn spatial_rank(&self) -> usize {
        self.dilation.len()
    }

    /// Plain-convolution view of one level.
    pub fn level_conv_spec(&self, level: usize) -> ConvSpec {
        let l = &self.levels[level];
        ConvSpec::same_padded(
            &l.kernel,
            &self.stride,
            &self.dilation,
            l.groups,
            self.in_channels,
            l.out_channels,
            false,
        )
    }

    pub fn level_weight_dims(&self, level: usize) -> Vec<usize> {
        self.level_conv_spec(level).weight_dims()
    }

    /// Learnable parameters: `sum_n prod(K_n) * (FM_i / G_n) * FM_o_n`.
    pub fn param_count(&self) -> usize {
        self.levels
            .iter()
            .map(|l| {
                let kk: usize = l.kernel.iter().product();
                kk * (self.in_channels / l.groups) * l.out_channels
            })
            .sum()
    }
}

/// Checks every construction rule and returns all violations (an empty list
/// means the spec is valid). Violations are data, not errors.
pub fn validate(spec: &PyConvSpec) -> Vec<String> {
    let mut violations = Vec::new();
    if spec.levels.is_empty() {
        violations.push("pyconv needs at least one level".to_string());
        return violations;
    }
    if spec.in_channels == 0 {
        violations.push("in-channels must be positive".to_string());
    }
    let rank = spec.spatial_rank();
    if spec.stride.len() != rank || spec.stride.iter().any(|&s| s == 0) {
        violations.push(format!("stride {:?} invalid for rank {rank}", spec.stride));
    }
    for (i, level) in spec.levels.iter().enumerate() {
        if level.kernel.len() != rank {
            violations.push(format!("level {i}: kernel rank differs from spec rank"));
            continue;
        }
        if level.kernel.iter().any(|&k| k == 0 || k % 2 == 0) {
            violations.push(format!(
                "level {i}: kernel {:?} must have odd positive extents",
                level.kernel
            ));
        }
        if level.out_channels == 0 {
            violations.push(format!("level {i}: out-channels must be positive"));
        }
        if level.groups == 0 {
            violations.push(format!("level {i}: groups must be positive"));
        } else {
            if spec.in_channels % level.groups != 0 {
                violations.push(format!(
                    "level {i}: groups {} must divide in-channels {}",
                    level.groups, spec.in_channels
                ));
            }
            if level.out_channels % level.groups != 0 {
                violations.push(format!(
                    "level {i}: groups {} must divide level out-channels {}",
                    level.groups, level.out_channels
                ));
            }
        }
        if i > 0 && level.spatial_size() <= spec.levels[i - 1].spatial_size() {
            violations.push(format!(
                "level {i}: kernel sizes must strictly increase bottom to top"
            ));
        }
    }
    violations
}

fn validated(spec: &PyConvSpec) -> Result<()> {
    let violations = validate(spec);
    if violations.is_empty() {
        Ok(())
    } else {
        spec_err(violations.join("; "))
    }
}

/// Default group schedule: the ideal ratio of level `n` is
/// `r_n = K_n^2 / K_1^2`; the level gets the smallest power-of-two divisor of
/// `in_channels` that reaches `r_n` (the largest available one when the ratio
/// exceeds them all). The bottom level always gets one group.
pub fn default_group_schedule(in_channels: usize, kernel_sizes: &[usize]) -> Result<Vec<usize>> {
    if in_channels < 1 {
        return spec_err("in-channels must be positive".to_string());
    }
    if kernel_sizes.is_empty() {
        return spec_err("at least one kernel size is required".to_string());
    }
    if kernel_sizes.windows(2).any(|w| w[0] >= w[1]) {
        return spec_err(format!(
            "kernel sizes {kernel_sizes:?} must be strictly increasing"
        ));
    }
    let mut divisors = Vec::new();
    let mut p = 1usize;
    while in_channels % p == 0 {
        divisors.push(p);
        match p.checked_mul(2) {
            Some(next) => p = next,
            None => break,
        }
    }
    let k1 = kernel_sizes[0] as f64;
    Ok(kernel_sizes
        .iter()
        .map(|&k| {
            let ratio = (k as f64 * k as f64) / (k1 * k1);
            divisors
                .iter()
                .copied()
                .find(|&d| d as f64 >= ratio)
                .unwrap_or(*divisors.last().expect("at least divisor 1"))
        })
        .collect())
}

/// Runs every level over the full input and concatenates the outputs in
/// level order (ascending kernel size).
pub fn pyconv_forward<T: Scalar>(
    input: &Tensor<T>,
    spec: &PyConvSpec,
    level_weights: &[Tensor<T>],
) -> Result<Tensor<T>> {
    validated(spec)?;
    if level_weights.len() != spec.levels.len() {
        return spec_err(format!(
            "{} weight tensors for {} levels",
            level_weights.len(),
            spec.levels.len()
        ));
    }
    let mut outputs = Vec::with_capacity(spec.levels.len());
    for (i, w) in level_weights.iter().enumerate() {
        outputs.push(conv_forward(input, w, None, &spec.level_conv_spec(i))?);
    }
    let refs: Vec<&Tensor<T>> = outputs.iter().collect();
    Tensor::concat_channels(&refs)
}

#[derive(Debug)]
pub struct PyConvGrads<T> {
    pub input: Tensor<T>,
    pub level_weights: Vec<Tensor<T>>,
}

/// Backward pass: the input gradient is the sum of the per-level input
/// gradients (levels are summed in ascending level order); weight gradients
/// are the per-level convolution adjoints.
pub fn pyconv_backward<T: Scalar>(
    input: &Tensor<T>,
    spec: &PyConvSpec,
    level_weights: &[Tensor<T>],
    grad_output: &Tensor<T>,
) -> Result<PyConvGrads<T>> {
    validated(spec)?;
    if grad_output.channels() != spec.out_channels() {
        return spec_err(format!(
            "grad_output has {} channels, pyconv emits {}",
            grad_output.channels(),
            spec.out_channels()
        ));
    }
    let mut grad_input = Tensor::zeros(input.dims())?;
    let mut grad_weights = Vec::with_capacity(spec.levels.len());
    let mut offset = 0;
    for (i, w) in level_weights.iter().enumerate() {
        let count = spec.levels[i].out_channels;
        let gout_level = grad_output.slice_channels(offset, count)?;
        offset += count;
        let ConvGrads {
            input: gi,
            weights: gw,
            ..
        } = conv_backward(input, w, &spec.level_conv_spec(i), &gout_level)?;
        grad_input.add_assign(&gi)?;
        grad_weights.push(gw);
    }
    Ok(PyConvGrads {
        input: grad_input,
        level_weights: grad_weights,
    })
}

/// Exact parameter and FLOP counts; one multiply-accumulate is one FLOP, so
/// `flops = params * prod(out_spatial)` per image.
pub fn pyconv_cost(spec: &PyConvSpec, out_spatial: &[usize]) -> (usize, usize) {
    let params = spec.param_count();
    let area: usize = out_spatial.iter().product();
    (params, params * area)
}

/// Stage-1 PyConv4 over 64 channels: four levels of 16 outputs each with
/// kernels 3/5/7/9 and groups 1/4/8/16. Used by several tests.
#[cfg(test)]
pub(crate) fn stage1_spec() -> PyConvSpec {
    PyConvSpec::new(
        64,
        vec![1, 1],
        vec![
            PyConvLevel::square(3, 16, 1),
            PyConvLevel::square(5, 16, 4),
            PyConvLevel::square(7, 16, 8),
            PyConvLevel::square(9, 16, 16),
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::conv_forward_direct;

    #[test]
    fn table_stage1_spec_is_valid() {
        assert!(validate(&stage1_spec()).is_empty());
    }

    #[test]
    fn non_divisor_groups_are_reported() {
        let mut spec = stage1_spec();
        spec.levels[1].groups = 3;
        let v = validate(&spec);
        assert!(v.iter().any(|m| m.contains("divide in-channels")), "{v:?}");
    }

    #[test]
    fn groups_must_divide_level_outputs() {
        let mut spec = stage1_spec();
        spec.levels[3].groups = 32; // divides the 64 inputs but not 16 outputs
        let v = validate(&spec);
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("divide level out-channels"), "{v:?}");
    }

    #[test]
    fn even_and_non_increasing_kernels_are_reported() {
        let mut spec = stage1_spec();
        spec.levels[0].kernel = vec![4, 4];
        assert!(validate(&spec).iter().any(|v| v.contains("odd")));
        let mut spec = stage1_spec();
        spec.levels[2].kernel = vec![5, 5];
        assert!(validate(&spec)
            .iter()
            .any(|v| v.contains("strictly increase")));
    }

    #[test]
    fn default_schedule_matches_table_groupings() {
        assert_eq!(
            default_group_schedule(64, &[3, 5, 7, 9]).unwrap(),
            vec![1, 4, 8, 16]
        );
        assert_eq!(
            default_group_schedule(128, &[3, 5, 7]).unwrap(),
            vec![1, 4, 8]
        );
        assert_eq!(default_group_schedule(64, &[3]).unwrap(), vec![1]);
        assert_eq!(default_group_schedule(256, &[3, 5]).unwrap(), vec![1, 4]);
        assert!(default_group_schedule(0, &[3]).is_err());
    }

    #[test]
    fn schedule_saturates_at_the_largest_divisor() {
        // Ratio for 11x11 over 3x3 is 13.4; for 8 input channels the largest
        // power-of-two divisor is 8.
        assert_eq!(
            default_group_schedule(8, &[3, 5, 7, 9, 11]).unwrap(),
            vec![1, 4, 8, 8, 8]
        );
    }

    #[test]
    fn single_level_pyconv_is_standard_convolution() {
        let spec = PyConvSpec::new(6, vec![1, 1], vec![PyConvLevel::square(3, 4, 1)]);
        let input = Tensor::<f32>::he_normal(&[2, 6, 7, 7], 54, 90).unwrap();
        let w = Tensor::<f32>::he_normal(&spec.level_weight_dims(0), 54, 91).unwrap();
        let out = pyconv_forward(&input, &spec, std::slice::from_ref(&w)).unwrap();
        let plain = conv_forward(&input, &w, None, &spec.level_conv_spec(0)).unwrap();
        assert_eq!(out, plain);

        let gout = Tensor::<f32>::he_normal(out.dims(), 4, 92).unwrap();
        let pg = pyconv_backward(&input, &spec, std::slice::from_ref(&w), &gout).unwrap();
        let cg = conv_backward(&input, &w, &spec.level_conv_spec(0), &gout).unwrap();
        assert_eq!(pg.input, cg.input);
        assert_eq!(pg.level_weights[0], cg.weights);
    }

    #[test]
    fn stage1_output_keeps_channel_count_and_extent() {
        let spec = stage1_spec();
        let input = Tensor::<f32>::he_normal(&[1, 64, 56, 56], 64, 93).unwrap();
        let weights: Vec<Tensor<f32>> = (0..4)
            .map(|i| Tensor::he_normal(&spec.level_weight_dims(i), 64, 94 + i as u64).unwrap())
            .collect();
        let out = pyconv_forward(&input, &spec, &weights).unwrap();
        assert_eq!(out.dims(), &[1, 64, 56, 56]);
    }

    #[test]
    fn levels_decompose_into_standalone_convolutions() {
        let spec = PyConvSpec::new(
            8,
            vec![2, 2],
            vec![PyConvLevel::square(3, 4, 1), PyConvLevel::square(5, 8, 4)],
        );
        let input = Tensor::<f32>::he_normal(&[2, 8, 9, 9], 72, 95).unwrap();
        let w0 = Tensor::<f32>::he_normal(&spec.level_weight_dims(0), 72, 96).unwrap();
        let w1 = Tensor::<f32>::he_normal(&spec.level_weight_dims(1), 50, 97).unwrap();
        let out = pyconv_forward(&input, &spec, &[w0.clone(), w1.clone()]).unwrap();
        let l0 = conv_forward_direct(&input, &w0, None, &spec.level_conv_spec(0)).unwrap();
        let l1 = conv_forward_direct(&input, &w1, None, &spec.level_conv_spec(1)).unwrap();
        assert_eq!(out.slice_channels(0, 4).unwrap(), l0);
        assert_eq!(out.slice_channels(4, 8).unwrap(), l1);
    }

    #[test]
    fn zero_grad_output_gives_zero_grads() {
        let spec = stage1_spec();
        let input = Tensor::<f32>::he_normal(&[1, 64, 8, 8], 64, 98).unwrap();
        let weights: Vec<Tensor<f32>> = (0..4)
            .map(|i| Tensor::he_normal(&spec.level_weight_dims(i), 64, 99 + i as u64).unwrap())
            .collect();
        let gout = Tensor::<f32>::zeros(&[1, 64, 8, 8]).unwrap();
        let grads = pyconv_backward(&input, &spec, &weights, &gout).unwrap();
        assert!(grads.input.data().iter().all(|&x| x == 0.0));
        assert!(grads
            .level_weights
            .iter()
            .all(|w| w.data().iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let spec = PyConvSpec::new(
            8,
            vec![1, 1],
            vec![PyConvLevel::square(3, 4, 1), PyConvLevel::square(5, 4, 4)],
        );
        let input = Tensor::<f64>::he_normal(&[2, 8, 6, 6], 72, 100).unwrap();
        let weights: Vec<Tensor<f64>> = (0..2)
            .map(|i| Tensor::he_normal(&spec.level_weight_dims(i), 72, 101 + i as u64).unwrap())
            .collect();
        let out = pyconv_forward(&input, &spec, &weights).unwrap();
        let lw = Tensor::<f64>::he_normal(out.dims(), 1, 103).unwrap();
        let loss = |ws: &[Tensor<f64>], x: &Tensor<f64>| -> f64 {
            pyconv_forward(x, &spec, ws)
                .unwrap()
                .data()
                .iter()
                .zip(lw.data())
                .map(|(&a, &b)| a * b)
                .sum()
        };
        let grads = pyconv_backward(&input, &spec, &weights, &lw).unwrap();
        let eps = 1e-4;
        let mut worst = 0.0f64;
        for i in (0..input.len()).step_by(11) {
            let mut plus = input.clone();
            plus.data_mut()[i] += eps;
            let mut minus = input.clone();
            minus.data_mut()[i] -= eps;
            let fd = (loss(&weights, &plus) - loss(&weights, &minus)) / (2.0 * eps);
            let an = grads.input.data()[i];
            worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()).max(1e-8));
        }
        for level in 0..2 {
            for i in (0..weights[level].len()).step_by(13) {
                let mut plus = weights.to_vec();
                plus[level].data_mut()[i] += eps;
                let mut minus = weights.to_vec();
                minus[level].data_mut()[i] -= eps;
                let fd = (loss(&plus, &input) - loss(&minus, &input)) / (2.0 * eps);
                let an = grads.level_weights[level].data()[i];
                worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()).max(1e-8));
            }
        }
        assert!(worst <= 1e-5, "worst relative error {worst}");
    }

    #[test]
    fn cost_of_single_standard_level() {
        let spec = PyConvSpec::new(64, vec![1, 1], vec![PyConvLevel::square(3, 64, 1)]);
        let (params, flops) = pyconv_cost(&spec, &[56, 56]);
        assert_eq!(params, 36_864);
        assert_eq!(flops, 36_864 * 56 * 56);
    }

    #[test]
    fn cost_of_table_stage1_pyconv4() {
        let spec = stage1_spec();
        // Per level, bottom to top: 9216 + 6400 + 6272 + 5184.
        assert_eq!(spec.param_count(), 27_072);
        let per_level: Vec<usize> = spec
            .levels
            .iter()
            .map(|l| {
                let kk: usize = l.kernel.iter().product();
                kk * (64 / l.groups) * l.out_channels
            })
            .collect();
        assert_eq!(per_level, vec![9216, 6400, 6272, 5184]);
    }

    #[test]
    fn exact_ratio_schedules_cost_the_same_as_the_bottom_kernel() {
        // Grid where every ratio K_n^2/K_1^2 is an integer divisor of FM_i:
        // the summed cost collapses to K_1^2 * FM_i * FM_o exactly.
        for (fm_i, kernels) in [
            (9usize, vec![1usize, 3]),
            (18, vec![1, 3]),
            (25, vec![1, 5]),
            (36, vec![3, 9]),
            (72, vec![3, 9]),
            (225, vec![3, 9, 15]),
            (450, vec![1, 3, 15]),
        ] {
            let ratios: Vec<usize> = kernels
                .iter()
                .map(|&k| (k * k) / (kernels[0] * kernels[0]))
                .collect();
            for scale in [4usize, 8] {
                let levels: Vec<PyConvLevel> = kernels
                    .iter()
                    .zip(&ratios)
                    .map(|(&k, &g)| PyConvLevel::square(k, scale * g, g))
                    .collect();
                let spec = PyConvSpec::new(fm_i, vec![1, 1], levels);
                assert!(validate(&spec).is_empty(), "{spec:?}");
                let fm_o = spec.out_channels();
                let (params, flops) = pyconv_cost(&spec, &[7, 5]);
                assert_eq!(params, kernels[0] * kernels[0] * fm_i * fm_o, "{spec:?}");
                assert_eq!(flops, params * 35);
            }
        }
    }

    #[test]
    fn impulse_response_support_matches_kernel_size() {
        // A single-pixel impulse through one level lights up exactly a
        // K x K patch at stride 1 (receptive-field check).
        let spec = PyConvSpec::new(1, vec![1, 1], vec![PyConvLevel::square(5, 1, 1)]);
        let mut input = Tensor::<f32>::zeros(&[1, 1, 11, 11]).unwrap();
        input.set(&[0, 0, 5, 5], 1.0);
        let w = Tensor::<f32>::filled(&spec.level_weight_dims(0), 1.0).unwrap();
        let out = pyconv_forward(&input, &spec, std::slice::from_ref(&w)).unwrap();
        for y in 0..11 {
            for x in 0..11 {
                let lit = out.get(&[0, 0, y, x]) != 0.0;
                let inside = (3..=7).contains(&y) && (3..=7).contains(&x);
                assert_eq!(lit, inside, "at ({y}, {x})");
            }
        }
    }
}
