//! Single-shot detector built on the PyConv classification backbone.
//!
//! The backbone is truncated after stage 3 with all stage-3 strides set
//! to 1, so a 300x300 input yields 1024 maps at 38x38. The head then
//! downsamples with pyramidal convolutions of decreasing level counts
//! (four levels at 38x38, three at 19x19, two at 10x10) followed by two
//! unpadded 3x3 convolutions down to 3x3 and 1x1. Each of the six retained
//! maps feeds a 3x3 localization convolution (4 values per default box) and
//! a 3x3 confidence convolution (one score per class per box).

use super::{
    classification_backbone_plan, default_group_schedule, level_splits, add_backbone,
    ClassificationConfig, Family,
};
use crate::analyzer::infer_shapes;
use crate::error::Result;
use crate::graph::NetworkGraph;
use crate::ops::ConvSpec;
use crate::pyconv::{PyConvLevel, PyConvSpec};
use crate::scalar::Scalar;

/// Default boxes per cell on the six detection maps.
pub const BOXES_PER_CELL: [usize; 6] = [4, 6, 6, 6, 4, 4];

#[derive(Debug, Clone)]
pub struct DetectionConfig {
    pub backbone_depth: usize,
    /// Class count including the background class.
    pub num_classes: usize,
    pub in_channels: usize,
    pub width_divisor: usize,
    pub input_spatial: [usize; 2],
    pub seed: u64,
}

impl DetectionConfig {
    pub fn new(backbone_depth: usize, num_classes: usize) -> Self {
        Self {
            backbone_depth,
            num_classes,
            in_channels: 3,
            width_divisor: 1,
            input_spatial: [300, 300],
            seed: 0,
        }
    }
}

/// One detection source: spatial side(s), channel count and box count.
#[derive(Debug, Clone)]
pub struct DetectionMap {
    pub index: usize,
    pub channels: usize,
    pub spatial: Vec<usize>,
    pub boxes_per_cell: usize,
}

fn pyramid(in_channels: usize, out_channels: usize, n_levels: usize, stride: usize) -> Result<PyConvSpec> {
    let kernels: Vec<usize> = [3usize, 5, 7, 9][..n_levels].to_vec();
    let schedule = default_group_schedule(in_channels, &kernels)?;
    let splits = level_splits(out_channels, n_levels)?;
    let levels = kernels
        .iter()
        .zip(splits)
        .zip(schedule)
        .map(|((&k, out), g)| {
            PyConvLevel::square(k, out, super::clamp_pow2(g, &[in_channels, out]))
        })
        .collect();
    Ok(PyConvSpec::new(
        in_channels,
        vec![stride, stride],
        levels,
    ))
}

/// Builds the detector. Returns the graph (outputs `loc0..loc5` /
/// `conf0..conf5`) and the six detection-map descriptions for the
/// configured input size.
pub fn build_detection<T: Scalar>(
    cfg: &DetectionConfig,
) -> Result<(NetworkGraph<T>, Vec<DetectionMap>)> {
    let backbone_cfg = ClassificationConfig {
        family: Family::PyConvResNet,
        depth: cfg.backbone_depth,
        level_schedule: [4, 3, 2, 1],
        downsampling: super::default_downsampling(Family::PyConvResNet),
        num_classes: 1,
        in_channels: cfg.in_channels,
        width_divisor: cfg.width_divisor,
        seed: cfg.seed,
    };
    let mut plan = classification_backbone_plan(&backbone_cfg)?;
    // Keep stage 3 at the stage-2 resolution; the head takes over from there.
    plan.stages[2].first_stride = vec![1, 1];

    let mut net = NetworkGraph::new(cfg.seed);
    let input = net.add_input("image");
    let stages = add_backbone(&mut net, input, &plan, 3)?;
    let s3 = stages[2];
    let s3_channels = plan.stages[2].out_channels;

    let d = cfg.width_divisor;
    let head_channels = [
        super::scaled(512, d)?,
        super::scaled(256, d)?,
        super::scaled(256, d)?,
        super::scaled(128, d)?,
        super::scaled(128, d)?,
    ];

    let mut feature_ids = vec![s3];
    let mut feature_channels = vec![s3_channels];

    // Three strided pyramids with 4, 3, 2 levels.
    let mut cursor = s3;
    let mut cin = s3_channels;
    for (i, levels) in [4usize, 3, 2].into_iter().enumerate() {
        let cout = head_channels[i];
        let spec = pyramid(cin, cout, levels, 2)?;
        let py = net.add_pyconv(&format!("head.h{}.pyconv", i + 1), cursor, spec)?;
        let bn = net.add_batchnorm(&format!("head.h{}.bn", i + 1), py, cout)?;
        cursor = net.add_relu(&format!("head.h{}.relu", i + 1), bn);
        cin = cout;
        feature_ids.push(cursor);
        feature_channels.push(cout);
    }

    // Two unpadded single-level 3x3 convolutions shrink 5x5 -> 3x3 -> 1x1.
    for i in 3..5 {
        let cout = head_channels[i];
        let conv = net.add_conv(
            &format!("head.h{}.conv", i + 1),
            cursor,
            ConvSpec {
                kernel: vec![3, 3],
                stride: vec![1, 1],
                padding: vec![0, 0],
                dilation: vec![1, 1],
                groups: 1,
                in_channels: cin,
                out_channels: cout,
                bias: false,
            },
        )?;
        let bn = net.add_batchnorm(&format!("head.h{}.bn", i + 1), conv, cout)?;
        cursor = net.add_relu(&format!("head.h{}.relu", i + 1), bn);
        cin = cout;
        feature_ids.push(cursor);
        feature_channels.push(cout);
    }

    // Box regression and class confidence convolutions per map.
    for (i, (&feat, &channels)) in feature_ids.iter().zip(&feature_channels).enumerate() {
        let boxes = BOXES_PER_CELL[i];
        let loc = net.add_conv(
            &format!("det.loc{i}"),
            feat,
            ConvSpec::same_padded(&[3, 3], &[1, 1], &[1, 1], 1, channels, 4 * boxes, true),
        )?;
        net.mark_output(&format!("loc{i}"), loc);
        let conf = net.add_conv(
            &format!("det.conf{i}"),
            feat,
            ConvSpec::same_padded(
                &[3, 3],
                &[1, 1],
                &[1, 1],
                1,
                channels,
                cfg.num_classes * boxes,
                true,
            ),
        )?;
        net.mark_output(&format!("conf{i}"), conf);
    }

    let input_dims = vec![
        1,
        cfg.in_channels,
        cfg.input_spatial[0],
        cfg.input_spatial[1],
    ];
    let shapes = infer_shapes(&net, &[input_dims])?;
    let maps = feature_ids
        .iter()
        .enumerate()
        .map(|(i, &id)| DetectionMap {
            index: i,
            channels: feature_channels[i],
            spatial: shapes[id][2..].to_vec(),
            boxes_per_cell: BOXES_PER_CELL[i],
        })
        .collect();

    Ok((net, maps))
}
