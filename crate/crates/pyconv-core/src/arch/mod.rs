//! Declarative network builders: classification (PyConvResNet,
//! PyConvHGResNet, baselines, ablation schedules), semantic segmentation
//! (PyConvSegNet), detection (PyConvSSD) and the 3D video networks.

mod blocks;
pub mod describe;
mod detect;
mod segment;

pub use blocks::{add_bottleneck, BlockSpec, ShortcutKind};
pub use detect::{build_detection, DetectionConfig, DetectionMap};
pub use segment::{build_segmentation, SegmentationConfig};

use crate::error::{spec_err, Error, Result};
use crate::graph::{NetworkGraph, NodeId};
use crate::ops::{ConvSpec, PoolSpec};
use crate::pyconv::{default_group_schedule, PyConvLevel};
use crate::scalar::Scalar;

/// Network family. The baseline is the plain residual network the PyConv
/// variants are measured against; `Top` keeps only the largest kernel of
/// each stage's pyramid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    ResNetBaseline,
    PyConvResNet,
    PyConvHGResNet,
    PyConvResNetTop,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::ResNetBaseline => "resnet",
            Family::PyConvResNet => "pyconvresnet",
            Family::PyConvHGResNet => "pyconvhgresnet",
            Family::PyConvResNetTop => "pyconvresnet-top",
        }
    }
}

/// Where the first downsampling after the stem happens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Downsampling {
    /// Stem max pool; stage 1 keeps the resolution (baseline layout).
    StemPool,
    /// No stem pool; every stage downsamples in its first block and the
    /// first block's shortcut carries a 3x3/stride-2 max pool before its
    /// projection.
    ShortcutMaxPool,
}

#[derive(Debug, Clone)]
pub struct ClassificationConfig {
    pub family: Family,
    pub depth: usize,
    /// PyConv level count per stage, e.g. `[4, 3, 2, 1]`.
    pub level_schedule: [usize; 4],
    pub downsampling: Downsampling,
    pub num_classes: usize,
    pub in_channels: usize,
    /// Divides every channel count; 8 gives the desk-scale toy networks.
    pub width_divisor: usize,
    pub seed: u64,
}

impl ClassificationConfig {
    pub fn new(family: Family, depth: usize) -> Self {
        Self {
            family,
            depth,
            level_schedule: [4, 3, 2, 1],
            downsampling: default_downsampling(family),
            num_classes: 1000,
            in_channels: 3,
            width_divisor: 1,
            seed: 0,
        }
    }

    pub fn toy(family: Family, depth: usize) -> Self {
        Self {
            num_classes: 10,
            in_channels: 1,
            width_divisor: 8,
            ..Self::new(family, depth)
        }
    }
}

pub fn default_downsampling(family: Family) -> Downsampling {
    match family {
        Family::ResNetBaseline => Downsampling::StemPool,
        _ => Downsampling::ShortcutMaxPool,
    }
}

#[derive(Debug, Clone)]
pub struct VideoConfig {
    pub family: Family,
    pub depth: usize,
    pub num_classes: usize,
    pub in_channels: usize,
    pub width_divisor: usize,
    pub seed: u64,
}

impl VideoConfig {
    pub fn new(family: Family, depth: usize) -> Self {
        Self {
            family,
            depth,
            num_classes: 400,
            in_channels: 3,
            width_divisor: 1,
            seed: 0,
        }
    }
}

/// Residual block counts per stage for the supported depths.
pub fn block_counts(depth: usize) -> Result<[usize; 4]> {
    match depth {
        50 => Ok([3, 4, 6, 3]),
        101 => Ok([3, 4, 23, 3]),
        152 => Ok([3, 8, 36, 3]),
        _ => spec_err(format!("unsupported depth {depth}; expected 50, 101 or 152")),
    }
}

/// Output-channel split across `n` pyramid levels, bottom to top. One or two
/// quarters go to the small kernels and the remainder to the large ones, so
/// the split widens with the kernel (the single-, two- and four-level cases
/// degenerate to even splits).
pub fn level_splits(total: usize, n: usize) -> Result<Vec<usize>> {
    let fractions: &[usize] = match n {
        1 => &[1],
        2 => &[2, 2],
        3 => &[4, 4, 2],
        4 => &[4, 4, 4, 4],
        5 => &[8, 8, 4, 4, 4],
        _ => return spec_err(format!("unsupported level count {n} (max 5)")),
    };
    let mut splits = Vec::with_capacity(n);
    for &f in fractions {
        if total % f != 0 {
            return spec_err(format!("{total} channels cannot split into 1/{f} shares"));
        }
        splits.push(total / f);
    }
    Ok(splits)
}

/// Largest power of two that is at most `g` and divides every extent in
/// `divides`. Keeps derived group schedules valid at scaled-down widths.
fn clamp_pow2(g: usize, divides: &[usize]) -> usize {
    let mut g = g.max(1);
    while g > 1 && divides.iter().any(|&d| d % g != 0) {
        g /= 2;
    }
    g
}

fn scaled(value: usize, divisor: usize) -> Result<usize> {
    if divisor == 0 || value % divisor != 0 {
        return spec_err(format!("width divisor {divisor} does not divide {value}"));
    }
    Ok(value / divisor)
}

const STAGE_KERNELS: [usize; 5] = [3, 5, 7, 9, 11];

/// Explicit high-grouping schedule (ascending kernel order, per stage).
const HG_GROUPS: [&[usize]; 4] = [&[32, 32, 32, 32], &[32, 64, 64], &[32, 64], &[32]];

/// Pyramid levels of one 2D stage.
fn stage_levels_2d(
    family: Family,
    stage: usize,
    width: usize,
    n_levels: usize,
) -> Result<Vec<PyConvLevel>> {
    if n_levels == 0 || n_levels > STAGE_KERNELS.len() {
        return spec_err(format!("level schedule entry {n_levels} out of 1..=5"));
    }
    let kernels = &STAGE_KERNELS[..n_levels];
    match family {
        Family::ResNetBaseline => Ok(vec![PyConvLevel::square(3, width, 1)]),
        Family::PyConvResNetTop => {
            let schedule = default_group_schedule(width, kernels)?;
            let top_k = kernels[n_levels - 1];
            let g = clamp_pow2(schedule[n_levels - 1], &[width]);
            Ok(vec![PyConvLevel::square(top_k, width, g)])
        }
        Family::PyConvResNet => {
            let schedule = default_group_schedule(width, kernels)?;
            let splits = level_splits(width, n_levels)?;
            Ok(kernels
                .iter()
                .zip(splits)
                .zip(schedule)
                .map(|((&k, out), g)| PyConvLevel::square(k, out, clamp_pow2(g, &[width, out])))
                .collect())
        }
        Family::PyConvHGResNet => {
            if n_levels != HG_GROUPS[stage].len() {
                return spec_err(format!(
                    "high-grouping variant fixes stage {} at {} levels",
                    stage + 1,
                    HG_GROUPS[stage].len()
                ));
            }
            let splits = level_splits(width, n_levels)?;
            Ok(STAGE_KERNELS[..n_levels]
                .iter()
                .zip(splits)
                .zip(HG_GROUPS[stage])
                .map(|((&k, out), &g)| PyConvLevel::square(k, out, clamp_pow2(g, &[width, out])))
                .collect())
        }
    }
}

/// 3D pyramid kernels per stage, temporal extent first. Temporal sizes grow
/// slower than spatial ones because clips are short.
const VIDEO_STAGE_KERNELS: [&[[usize; 3]]; 4] = [
    &[[3, 3, 3], [3, 5, 5], [5, 7, 7], [7, 9, 9]],
    &[[3, 3, 3], [3, 5, 5], [5, 7, 7]],
    &[[3, 3, 3], [3, 5, 5]],
    &[[3, 3, 3]],
];

fn stage_levels_3d(family: Family, stage: usize, width: usize) -> Result<Vec<PyConvLevel>> {
    match family {
        Family::ResNetBaseline => Ok(vec![PyConvLevel {
            kernel: vec![3, 3, 3],
            out_channels: width,
            groups: 1,
        }]),
        Family::PyConvResNet => {
            let kernels = VIDEO_STAGE_KERNELS[stage];
            let spatial: Vec<usize> = kernels.iter().map(|k| k[1]).collect();
            // The group schedule follows the spatial kernel ratio; the
            // temporal extent does not enter the ratio.
            let schedule = default_group_schedule(width, &spatial)?;
            let splits = level_splits(width, kernels.len())?;
            Ok(kernels
                .iter()
                .zip(splits)
                .zip(schedule)
                .map(|((k, out), g)| PyConvLevel {
                    kernel: k.to_vec(),
                    out_channels: out,
                    groups: clamp_pow2(g, &[width, out]),
                })
                .collect())
        }
        _ => spec_err("video networks support the baseline and pyconvresnet families".to_string()),
    }
}

#[derive(Debug, Clone)]
pub(crate) struct StagePlan {
    pub width: usize,
    pub out_channels: usize,
    pub blocks: usize,
    pub levels: Vec<PyConvLevel>,
    pub first_stride: Vec<usize>,
    pub dilation: Vec<usize>,
    pub maxpool_shortcut: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct BackbonePlan {
    pub rank: usize,
    pub in_channels: usize,
    pub stem_out: usize,
    pub stem_kernel: Vec<usize>,
    pub stem_stride: Vec<usize>,
    pub stem_pool: Option<PoolSpec>,
    pub stages: Vec<StagePlan>,
}

pub(crate) fn classification_backbone_plan(cfg: &ClassificationConfig) -> Result<BackbonePlan> {
    let counts = block_counts(cfg.depth)?;
    if cfg.family == Family::PyConvHGResNet && cfg.level_schedule != [4, 3, 2, 1] {
        return spec_err("the high-grouping variant is defined for the (4, 3, 2, 1) schedule".to_string());
    }
    let stem_out = scaled(64, cfg.width_divisor)?;
    let mut stages = Vec::with_capacity(4);
    for stage in 0..4 {
        let base_width = scaled(64 << stage, cfg.width_divisor)?;
        let width = if cfg.family == Family::PyConvHGResNet {
            base_width * 2
        } else {
            base_width
        };
        let n_levels = match cfg.family {
            Family::ResNetBaseline => 1,
            _ => cfg.level_schedule[stage],
        };
        let first_stride = match cfg.downsampling {
            Downsampling::StemPool if stage == 0 => vec![1, 1],
            _ => vec![2, 2],
        };
        stages.push(StagePlan {
            width,
            out_channels: base_width * 4,
            blocks: counts[stage],
            levels: stage_levels_2d(cfg.family, stage, width, n_levels)?,
            first_stride,
            dilation: vec![1, 1],
            maxpool_shortcut: cfg.downsampling == Downsampling::ShortcutMaxPool,
        });
    }
    Ok(BackbonePlan {
        rank: 2,
        in_channels: cfg.in_channels,
        stem_out,
        stem_kernel: vec![7, 7],
        stem_stride: vec![2, 2],
        stem_pool: match cfg.downsampling {
            Downsampling::StemPool => Some(PoolSpec {
                window: vec![3, 3],
                stride: vec![2, 2],
                padding: vec![1, 1],
            }),
            Downsampling::ShortcutMaxPool => None,
        },
        stages,
    })
}

fn video_backbone_plan(cfg: &VideoConfig) -> Result<BackbonePlan> {
    let counts = block_counts(cfg.depth)?;
    let stem_out = scaled(64, cfg.width_divisor)?;
    // Output clip lengths per stage are 16, 16, 8, 4 frames for a 16-frame
    // input: only stages 3 and 4 stride the temporal axis.
    let stage_strides: [[usize; 3]; 4] = match cfg.family {
        Family::ResNetBaseline => [[1, 1, 1], [1, 2, 2], [2, 2, 2], [2, 2, 2]],
        _ => [[1, 2, 2], [1, 2, 2], [2, 2, 2], [2, 2, 2]],
    };
    let mut stages = Vec::with_capacity(4);
    for stage in 0..4 {
        let width = scaled(64 << stage, cfg.width_divisor)?;
        stages.push(StagePlan {
            width,
            out_channels: width * 4,
            blocks: counts[stage],
            levels: stage_levels_3d(cfg.family, stage, width)?,
            first_stride: stage_strides[stage].to_vec(),
            dilation: vec![1, 1, 1],
            maxpool_shortcut: cfg.family != Family::ResNetBaseline,
        });
    }
    Ok(BackbonePlan {
        rank: 3,
        in_channels: cfg.in_channels,
        stem_out,
        stem_kernel: vec![5, 7, 7],
        stem_stride: vec![1, 2, 2],
        stem_pool: match cfg.family {
            Family::ResNetBaseline => Some(PoolSpec {
                window: vec![1, 3, 3],
                stride: vec![1, 2, 2],
                padding: vec![0, 1, 1],
            }),
            _ => None,
        },
        stages,
    })
}

/// Emits stem + four stages; returns the output node of every stage.
pub(crate) fn add_backbone<T: Scalar>(
    net: &mut NetworkGraph<T>,
    input: NodeId,
    plan: &BackbonePlan,
    stage_limit: usize,
) -> Result<Vec<NodeId>> {
    let ones = vec![1usize; plan.rank];
    let stem = net.add_conv(
        "stem.conv",
        input,
        ConvSpec::same_padded(
            &plan.stem_kernel,
            &plan.stem_stride,
            &ones,
            1,
            plan.in_channels,
            plan.stem_out,
            false,
        ),
    )?;
    let stem_bn = net.add_batchnorm("stem.bn", stem, plan.stem_out)?;
    let mut cursor = net.add_relu("stem.relu", stem_bn);
    if let Some(pool) = &plan.stem_pool {
        cursor = net.add_maxpool("stem.pool", cursor, pool.clone());
    }

    let mut in_channels = plan.stem_out;
    let mut stage_outputs = Vec::new();
    for (stage_idx, stage) in plan.stages.iter().take(stage_limit).enumerate() {
        for block_idx in 0..stage.blocks {
            let first = block_idx == 0;
            let stride = if first {
                stage.first_stride.clone()
            } else {
                ones.clone()
            };
            let downsamples = stride.iter().any(|&s| s != 1);
            let shortcut = if first {
                if stage.maxpool_shortcut && downsamples {
                    ShortcutKind::MaxPoolProjection
                } else {
                    ShortcutKind::Projection
                }
            } else {
                ShortcutKind::Identity
            };
            let spec = BlockSpec {
                in_channels,
                width: stage.width,
                out_channels: stage.out_channels,
                stride,
                dilation: stage.dilation.clone(),
                levels: stage.levels.clone(),
                shortcut,
            };
            cursor = add_bottleneck(
                net,
                &format!("stage{}.block{}", stage_idx + 1, block_idx),
                cursor,
                &spec,
            )?;
            in_channels = stage.out_channels;
        }
        stage_outputs.push(cursor);
    }
    Ok(stage_outputs)
}

/// Image classifier: stem, four stages, global average pool, linear head.
pub fn build_classification<T: Scalar>(cfg: &ClassificationConfig) -> Result<NetworkGraph<T>> {
    let plan = classification_backbone_plan(cfg)?;
    let mut net = NetworkGraph::new(cfg.seed);
    let input = net.add_input("image");
    let stages = add_backbone(&mut net, input, &plan, 4)?;
    let gap = net.add_global_avg_pool("gap", stages[3]);
    let features = plan.stages[3].out_channels;
    let fc = net.add_linear("fc", gap, features, cfg.num_classes)?;
    net.mark_output("logits", fc);
    Ok(net)
}

/// Video classifier: the 3D backbone, global average pool over
/// time and space, dropout 0.5, linear head.
pub fn build_video<T: Scalar>(cfg: &VideoConfig) -> Result<NetworkGraph<T>> {
    let plan = video_backbone_plan(cfg)?;
    let mut net = NetworkGraph::new(cfg.seed);
    let input = net.add_input("clip");
    let stages = add_backbone(&mut net, input, &plan, 4)?;
    let gap = net.add_global_avg_pool("gap", stages[3]);
    let drop = net.add_dropout("dropout", gap, 0.5);
    let features = plan.stages[3].out_channels;
    let fc = net.add_linear("fc", drop, features, cfg.num_classes)?;
    net.mark_output("logits", fc);
    Ok(net)
}

/// Parses a family name as used in config files.
impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "resnet" | "resnet-baseline" => Ok(Family::ResNetBaseline),
            "pyconvresnet" => Ok(Family::PyConvResNet),
            "pyconvhgresnet" => Ok(Family::PyConvHGResNet),
            "pyconvresnet-top" => Ok(Family::PyConvResNetTop),
            other => Err(Error::Spec(format!("unknown family {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Mode;
    use crate::pyconv;
    use crate::tensor::Tensor;

    #[test]
    fn block_counts_per_depth() {
        assert_eq!(block_counts(50).unwrap(), [3, 4, 6, 3]);
        assert_eq!(block_counts(101).unwrap(), [3, 4, 23, 3]);
        assert_eq!(block_counts(152).unwrap(), [3, 8, 36, 3]);
        assert!(block_counts(42).is_err());
    }

    #[test]
    fn level_split_shares() {
        assert_eq!(level_splits(64, 4).unwrap(), vec![16, 16, 16, 16]);
        assert_eq!(level_splits(128, 3).unwrap(), vec![32, 32, 64]);
        assert_eq!(level_splits(256, 2).unwrap(), vec![128, 128]);
        assert_eq!(level_splits(512, 1).unwrap(), vec![512]);
        assert_eq!(level_splits(64, 5).unwrap(), vec![8, 8, 16, 16, 16]);
        assert!(level_splits(64, 6).is_err());
    }

    #[test]
    fn pyconv50_stage_layout_matches_reference_table() {
        let cfg = ClassificationConfig::new(Family::PyConvResNet, 50);
        let plan = classification_backbone_plan(&cfg).unwrap();
        // Stage 4 is a plain 3x3 over 512 channels.
        assert_eq!(plan.stages[3].levels, vec![PyConvLevel::square(3, 512, 1)]);
        // Stage 2: kernels 3/5/7 with 32/32/64 outputs and groups 1/4/8.
        assert_eq!(
            plan.stages[1].levels,
            vec![
                PyConvLevel::square(3, 32, 1),
                PyConvLevel::square(5, 32, 4),
                PyConvLevel::square(7, 64, 8),
            ]
        );
        // Stage 1: 16 outputs per level with groups 1/4/8/16.
        assert_eq!(
            plan.stages[0].levels,
            vec![
                PyConvLevel::square(3, 16, 1),
                PyConvLevel::square(5, 16, 4),
                PyConvLevel::square(7, 16, 8),
                PyConvLevel::square(9, 16, 16),
            ]
        );
    }

    #[test]
    fn hg_variant_doubles_widths_and_uses_table_groups() {
        let cfg = ClassificationConfig::new(Family::PyConvHGResNet, 50);
        let plan = classification_backbone_plan(&cfg).unwrap();
        assert_eq!(plan.stages[0].width, 128);
        assert_eq!(
            plan.stages[0].levels,
            vec![
                PyConvLevel::square(3, 32, 32),
                PyConvLevel::square(5, 32, 32),
                PyConvLevel::square(7, 32, 32),
                PyConvLevel::square(9, 32, 32),
            ]
        );
        assert_eq!(
            plan.stages[1].levels,
            vec![
                PyConvLevel::square(3, 64, 32),
                PyConvLevel::square(5, 64, 64),
                PyConvLevel::square(7, 128, 64),
            ]
        );
        assert_eq!(plan.stages[3].levels, vec![PyConvLevel::square(3, 1024, 32)]);
    }

    #[test]
    fn every_built_spec_validates() {
        for family in [
            Family::ResNetBaseline,
            Family::PyConvResNet,
            Family::PyConvHGResNet,
            Family::PyConvResNetTop,
        ] {
            let cfg = ClassificationConfig::new(family, 50);
            let net = build_classification::<f32>(&cfg).unwrap();
            for node in &net.nodes {
                if let crate::graph::NodeOp::PyConv(spec) = &node.op {
                    assert!(
                        pyconv::validate(spec).is_empty(),
                        "{family:?} {}: {:?}",
                        node.name,
                        pyconv::validate(spec)
                    );
                }
            }
        }
    }

    #[test]
    fn node_census_matches_depth() {
        for (depth, expect) in [(50, [3, 4, 6, 3]), (101, [3, 4, 23, 3])] {
            let cfg = ClassificationConfig::toy(Family::PyConvResNet, depth);
            let net = build_classification::<f32>(&cfg).unwrap();
            for stage in 0..4 {
                let blocks = net
                    .nodes
                    .iter()
                    .filter(|n| {
                        n.name.starts_with(&format!("stage{}.", stage + 1))
                            && n.name.ends_with(".pyconv")
                    })
                    .count();
                assert_eq!(blocks, expect[stage], "depth {depth} stage {}", stage + 1);
            }
        }
    }

    #[test]
    fn toy_forward_produces_logits_and_is_deterministic() {
        let cfg = ClassificationConfig::toy(Family::PyConvResNet, 50);
        let mut net = build_classification::<f32>(&cfg).unwrap();
        let x = Tensor::he_normal(&[2, 1, 32, 32], 1, 3).unwrap();
        let a = net.run(&[&x], Mode::Eval, 0).unwrap();
        assert_eq!(a["logits"].dims(), &[2, 10]);
        let b = net.run(&[&x], Mode::Eval, 0).unwrap();
        assert_eq!(a["logits"], b["logits"]);
    }

    #[test]
    fn downsampling_happens_once_per_stage_in_the_first_block() {
        let cfg = ClassificationConfig::toy(Family::PyConvResNet, 50);
        let mut net = build_classification::<f32>(&cfg).unwrap();
        let x = Tensor::he_normal(&[1, 1, 64, 64], 1, 4).unwrap();
        let exec = net.forward(&[&x], Mode::Eval, 0).unwrap();
        // Spatial extent after each stage's first block halves exactly once:
        // 32 (stem) -> 16 -> 8 -> 4 -> 2.
        let mut expect = 16;
        for stage in 1..=4 {
            for node in net.nodes.iter() {
                if node.name == format!("stage{stage}.block0.relu") {
                    let id = net
                        .nodes
                        .iter()
                        .position(|n| n.name == node.name)
                        .unwrap();
                    assert_eq!(exec.value(id).spatial(), &[expect, expect], "stage {stage}");
                }
            }
            for node in net.nodes.iter() {
                if node.name.starts_with(&format!("stage{stage}.block"))
                    && node.name.ends_with(".relu")
                {
                    let id = net
                        .nodes
                        .iter()
                        .position(|n| n.name == node.name)
                        .unwrap();
                    assert_eq!(exec.value(id).spatial(), &[expect, expect]);
                }
            }
            expect /= 2;
        }
    }

    #[test]
    fn video_plan_matches_reference_table() {
        let cfg = VideoConfig::new(Family::PyConvResNet, 50);
        let plan = video_backbone_plan(&cfg).unwrap();
        assert_eq!(
            plan.stages[0].levels,
            vec![
                PyConvLevel { kernel: vec![3, 3, 3], out_channels: 16, groups: 1 },
                PyConvLevel { kernel: vec![3, 5, 5], out_channels: 16, groups: 4 },
                PyConvLevel { kernel: vec![5, 7, 7], out_channels: 16, groups: 8 },
                PyConvLevel { kernel: vec![7, 9, 9], out_channels: 16, groups: 16 },
            ]
        );
        assert_eq!(plan.stages[2].first_stride, vec![2, 2, 2]);
        assert_eq!(plan.stages[1].first_stride, vec![1, 2, 2]);
    }

    #[test]
    fn toy_video_forward_shapes() {
        let cfg = VideoConfig {
            width_divisor: 8,
            in_channels: 1,
            num_classes: 7,
            ..VideoConfig::new(Family::PyConvResNet, 50)
        };
        let mut net = build_video::<f32>(&cfg).unwrap();
        let x = Tensor::he_normal(&[1, 1, 8, 32, 32], 1, 5).unwrap();
        let out = net.run(&[&x], Mode::Eval, 0).unwrap();
        assert_eq!(out["logits"].dims(), &[1, 7]);
    }
}
