//! Scene-parsing network: a dilated backbone and a two-branch parsing head.
//!
//! The head aggregates context at two ranges. The local branch applies a
//! four-level PyConv at the backbone's output resolution; the global branch
//! first pools the feature maps so the largest spatial side is 9, applies
//! the same pyramid (whose 9x9 level then spans the whole map), and
//! upsamples back. Both branches are merged by a plain 3x3 convolution and
//! classified per pixel. An auxiliary classifier on the third backbone stage
//! provides deep supervision during training.

use super::{
    add_backbone, classification_backbone_plan, default_group_schedule, level_splits,
    ClassificationConfig, Family,
};
use crate::analyzer::infer_shapes;
use crate::error::{spec_err, Result};
use crate::graph::{NetworkGraph, NodeId};
use crate::ops::ConvSpec;
use crate::pyconv::{PyConvLevel, PyConvSpec};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct SegmentationConfig {
    pub backbone_family: Family,
    pub backbone_depth: usize,
    pub num_classes: usize,
    /// Ratio of input to backbone resolution: 8 or 16. Stages above the
    /// target keep stride 1 and dilate their kernels instead.
    pub output_stride: usize,
    pub in_channels: usize,
    pub width_divisor: usize,
    /// Input height/width; fixes the upsampling targets in the graph.
    pub input_spatial: [usize; 2],
    pub seed: u64,
}

impl SegmentationConfig {
    pub fn new(backbone_depth: usize, num_classes: usize, output_stride: usize) -> Self {
        Self {
            backbone_family: Family::ResNetBaseline,
            backbone_depth,
            num_classes,
            output_stride,
            in_channels: 3,
            width_divisor: 1,
            input_spatial: [473, 473],
            seed: 0,
        }
    }
}

/// Pool target for the global branch: the larger axis shrinks to 9 (or stays
/// if already smaller) and the other axis scales proportionally, at least 1.
fn global_pool_target(spatial: &[usize]) -> Vec<usize> {
    let largest = *spatial.iter().max().expect("non-empty spatial extents");
    let target_largest = largest.min(9);
    spatial
        .iter()
        .map(|&e| {
            if e == largest {
                target_largest
            } else {
                let t = (target_largest as f64 * e as f64 / largest as f64).round() as usize;
                t.clamp(1, e)
            }
        })
        .collect()
}

fn head_pyramid(channels: usize) -> Result<Vec<PyConvLevel>> {
    let kernels = [3usize, 5, 7, 9];
    let schedule = default_group_schedule(channels, &kernels)?;
    let splits = level_splits(channels, 4)?;
    Ok(kernels
        .iter()
        .zip(splits)
        .zip(schedule)
        .map(|((&k, out), g)| PyConvLevel::square(k, out, super::clamp_pow2(g, &[channels, out])))
        .collect())
}

fn conv_bn_relu<T: Scalar>(
    net: &mut NetworkGraph<T>,
    name: &str,
    input: NodeId,
    kernel: usize,
    cin: usize,
    cout: usize,
) -> Result<NodeId> {
    let conv = net.add_conv(
        &format!("{name}.conv"),
        input,
        ConvSpec::same_padded(&[kernel, kernel], &[1, 1], &[1, 1], 1, cin, cout, false),
    )?;
    let bn = net.add_batchnorm(&format!("{name}.bn"), conv, cout)?;
    Ok(net.add_relu(&format!("{name}.relu"), bn))
}

fn pyconv_bn_relu<T: Scalar>(
    net: &mut NetworkGraph<T>,
    name: &str,
    input: NodeId,
    channels: usize,
) -> Result<NodeId> {
    let spec = PyConvSpec::new(channels, vec![1, 1], head_pyramid(channels)?);
    let py = net.add_pyconv(&format!("{name}.pyconv"), input, spec)?;
    let bn = net.add_batchnorm(&format!("{name}.pyconv_bn"), py, channels)?;
    Ok(net.add_relu(&format!("{name}.pyconv_relu"), bn))
}

/// Builds the full segmentation network with `main` and `aux` outputs, both
/// upsampled to the input size.
pub fn build_segmentation<T: Scalar>(cfg: &SegmentationConfig) -> Result<NetworkGraph<T>> {
    if cfg.output_stride != 8 && cfg.output_stride != 16 {
        return spec_err(format!(
            "output stride {} unsupported; expected 8 or 16",
            cfg.output_stride
        ));
    }

    let backbone_cfg = ClassificationConfig {
        family: cfg.backbone_family,
        depth: cfg.backbone_depth,
        level_schedule: [4, 3, 2, 1],
        downsampling: super::default_downsampling(cfg.backbone_family),
        num_classes: 1,
        in_channels: cfg.in_channels,
        width_divisor: cfg.width_divisor,
        seed: cfg.seed,
    };
    let mut plan = classification_backbone_plan(&backbone_cfg)?;
    // Stride-to-dilation surgery. At stride 16 the last stage keeps its
    // resolution with dilation 2; at stride 8 the third stage dilates by 2
    // and the fourth by 4.
    if cfg.output_stride == 8 {
        plan.stages[2].first_stride = vec![1, 1];
        plan.stages[2].dilation = vec![2, 2];
        plan.stages[3].first_stride = vec![1, 1];
        plan.stages[3].dilation = vec![4, 4];
    } else {
        plan.stages[3].first_stride = vec![1, 1];
        plan.stages[3].dilation = vec![2, 2];
    }

    let mut net = NetworkGraph::new(cfg.seed);
    let input = net.add_input("image");
    let stages = add_backbone(&mut net, input, &plan, 4)?;
    let (stage3, stage4) = (stages[2], stages[3]);
    let backbone_channels = plan.stages[3].out_channels;
    let stage3_channels = plan.stages[2].out_channels;

    let input_dims = vec![
        1,
        cfg.in_channels,
        cfg.input_spatial[0],
        cfg.input_spatial[1],
    ];
    let shapes = infer_shapes(&net, &[input_dims])?;
    let feature_spatial: Vec<usize> = shapes[stage4][2..].to_vec();

    let head_c = super::scaled(512, cfg.width_divisor)?;
    let merge_c = super::scaled(256, cfg.width_divisor)?;

    // Local branch: reduce, pyramid, combine; all at feature resolution.
    let local = conv_bn_relu(&mut net, "head.local.reduce", stage4, 1, backbone_channels, head_c)?;
    let local = pyconv_bn_relu(&mut net, "head.local", local, head_c)?;
    let local = conv_bn_relu(&mut net, "head.local.combine", local, 1, head_c, head_c)?;

    // Global branch: pool so the largest side is 9, same pyramid, upsample
    // back to the feature resolution.
    let pooled = net.add_adaptive_avg_pool(
        "head.global.pool",
        stage4,
        global_pool_target(&feature_spatial),
    );
    let global = conv_bn_relu(&mut net, "head.global.reduce", pooled, 1, backbone_channels, head_c)?;
    let global = pyconv_bn_relu(&mut net, "head.global", global, head_c)?;
    let global = conv_bn_relu(&mut net, "head.global.combine", global, 1, head_c, head_c)?;
    let global = net.add_bilinear_upsample("head.global.up", global, feature_spatial.clone());

    // Merge and classify at feature resolution, then upsample to the input.
    let merged = net.add_concat("head.merge.concat", vec![local, global]);
    let merged = conv_bn_relu(&mut net, "head.merge", merged, 3, 2 * head_c, merge_c)?;
    let cls = net.add_conv(
        "head.cls",
        merged,
        ConvSpec::same_padded(&[1, 1], &[1, 1], &[1, 1], 1, merge_c, cfg.num_classes, true),
    )?;
    let main = net.add_bilinear_upsample("head.up", cls, cfg.input_spatial.to_vec());
    net.mark_output("main", main);

    // Auxiliary classifier on stage 3 (deep supervision).
    let aux = conv_bn_relu(&mut net, "aux.reduce", stage3, 3, stage3_channels, merge_c)?;
    let aux = net.add_dropout("aux.dropout", aux, 0.1);
    let aux = net.add_conv(
        "aux.cls",
        aux,
        ConvSpec::same_padded(&[1, 1], &[1, 1], &[1, 1], 1, merge_c, cfg.num_classes, true),
    )?;
    let aux = net.add_bilinear_upsample("aux.up", aux, cfg.input_spatial.to_vec());
    net.mark_output("aux", aux);

    Ok(net)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyzer;
    use crate::graph::Mode;
    use crate::tensor::Tensor;

    #[test]
    fn pool_target_keeps_aspect_ratio() {
        assert_eq!(global_pool_target(&[60, 60]), vec![9, 9]);
        assert_eq!(global_pool_target(&[60, 30]), vec![9, 5]);
        assert_eq!(global_pool_target(&[30, 60]), vec![5, 9]);
        assert_eq!(global_pool_target(&[7, 5]), vec![7, 5]);
        assert_eq!(global_pool_target(&[60, 3]), vec![9, 1]);
    }

    #[test]
    fn output_stride_governs_backbone_resolution() {
        for (os, expect) in [(8usize, 60usize), (16, 30)] {
            let cfg = SegmentationConfig::new(50, 150, os);
            let net = build_segmentation::<f32>(&cfg).unwrap();
            let shapes = analyzer::infer_shapes(&net, &[vec![1, 3, 473, 473]]).unwrap();
            let pool_id = net
                .nodes
                .iter()
                .position(|n| n.name == "head.global.pool")
                .unwrap();
            let stage4_id = net.nodes[pool_id].inputs[0];
            assert_eq!(&shapes[stage4_id][2..], &[expect, expect], "os {os}");
            assert_eq!(&shapes[pool_id][2..], &[9, 9]);
            // ceil(473 / os) invariant.
            assert_eq!(expect, 473usize.div_ceil(os));
        }
    }

    #[test]
    fn main_and_aux_outputs_match_input_resolution() {
        let cfg = SegmentationConfig::new(50, 150, 8);
        let net = build_segmentation::<f32>(&cfg).unwrap();
        let shapes = analyzer::infer_shapes(&net, &[vec![2, 3, 473, 473]]).unwrap();
        let main = net.output_id("main").unwrap();
        let aux = net.output_id("aux").unwrap();
        assert_eq!(shapes[main], vec![2, 150, 473, 473]);
        assert_eq!(shapes[aux], shapes[main]);
    }

    #[test]
    fn rejects_unsupported_output_stride() {
        let cfg = SegmentationConfig::new(50, 150, 32);
        assert!(build_segmentation::<f32>(&cfg).is_err());
    }

    #[test]
    fn toy_segmentation_forward_runs() {
        let cfg = SegmentationConfig {
            width_divisor: 8,
            in_channels: 1,
            num_classes: 5,
            input_spatial: [49, 49],
            ..SegmentationConfig::new(50, 5, 8)
        };
        let mut net = build_segmentation::<f32>(&cfg).unwrap();
        let x = Tensor::he_normal(&[1, 1, 49, 49], 1, 9).unwrap();
        let out = net.run(&[&x], Mode::GradCheck, 0).unwrap();
        assert_eq!(out["main"].dims(), &[1, 5, 49, 49]);
        assert_eq!(out["aux"].dims(), &[1, 5, 49, 49]);
    }
}
