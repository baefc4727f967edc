//! Residual bottleneck block around a PyConv.

use crate::error::{spec_err, Result};
use crate::graph::{NetworkGraph, NodeId};
use crate::ops::{ConvSpec, PoolSpec};
use crate::pyconv::{PyConvLevel, PyConvSpec};
use crate::scalar::Scalar;

/// How the residual branch crosses the block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShortcutKind {
    /// Pass-through; requires stride 1 and matching channel counts.
    Identity,
    /// 1x1 convolution (strided when the block downsamples) plus batch norm.
    Projection,
    /// 3x3 max pool with stride 2 followed by a stride-1 1x1 convolution and
    /// batch norm, so downsampling keeps translation invariance while the
    /// spatial convolutions of the main path see the full-resolution input.
    MaxPoolProjection,
}

/// One bottleneck: `1x1 (in -> width)` / PyConv over `width` / `1x1
/// (width -> out)`, batch norm and ReLU between, residual add, final ReLU.
/// The stride sits on the PyConv so downsampling happens at every kernel
/// scale in parallel.
#[derive(Debug, Clone)]
pub struct BlockSpec {
    pub in_channels: usize,
    pub width: usize,
    pub out_channels: usize,
    pub stride: Vec<usize>,
    pub dilation: Vec<usize>,
    pub levels: Vec<PyConvLevel>,
    pub shortcut: ShortcutKind,
}

impl BlockSpec {
    fn spatial_rank(&self) -> usize {
        self.stride.len()
    }

    fn downsamples(&self) -> bool {
        self.stride.iter().any(|&s| s != 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.shortcut == ShortcutKind::Identity
            && (self.downsamples() || self.in_channels != self.out_channels)
        {
            return spec_err(format!(
                "identity shortcut needs stride 1 and {} == {} channels",
                self.in_channels, self.out_channels
            ));
        }
        if self.shortcut == ShortcutKind::MaxPoolProjection && !self.downsamples() {
            return spec_err("max-pool shortcut only makes sense on a downsampling block".to_string());
        }
        Ok(())
    }
}

fn ones(rank: usize) -> Vec<usize> {
    vec![1; rank]
}

fn conv1x1(rank: usize, stride: &[usize], cin: usize, cout: usize) -> ConvSpec {
    ConvSpec::same_padded(&ones(rank), stride, &ones(rank), 1, cin, cout, false)
}

/// Appends the block's nodes and returns the id of its output.
pub fn add_bottleneck<T: Scalar>(
    net: &mut NetworkGraph<T>,
    name: &str,
    input: NodeId,
    spec: &BlockSpec,
) -> Result<NodeId> {
    spec.validate()?;
    let rank = spec.spatial_rank();

    let reduce = net.add_conv(
        &format!("{name}.reduce"),
        input,
        conv1x1(rank, &ones(rank), spec.in_channels, spec.width),
    )?;
    let reduce_bn = net.add_batchnorm(&format!("{name}.reduce_bn"), reduce, spec.width)?;
    let reduce_relu = net.add_relu(&format!("{name}.reduce_relu"), reduce_bn);

    let mut pyspec = PyConvSpec::new(spec.width, spec.stride.clone(), spec.levels.clone());
    pyspec.dilation = spec.dilation.clone();
    let pyconv = net.add_pyconv(&format!("{name}.pyconv"), reduce_relu, pyspec)?;
    let pyconv_bn = net.add_batchnorm(&format!("{name}.pyconv_bn"), pyconv, spec.width)?;
    let pyconv_relu = net.add_relu(&format!("{name}.pyconv_relu"), pyconv_bn);

    let expand = net.add_conv(
        &format!("{name}.expand"),
        pyconv_relu,
        conv1x1(rank, &ones(rank), spec.width, spec.out_channels),
    )?;
    let expand_bn = net.add_batchnorm(&format!("{name}.expand_bn"), expand, spec.out_channels)?;

    let shortcut = match spec.shortcut {
        ShortcutKind::Identity => input,
        ShortcutKind::Projection => {
            let proj = net.add_conv(
                &format!("{name}.shortcut_conv"),
                input,
                conv1x1(rank, &spec.stride, spec.in_channels, spec.out_channels),
            )?;
            net.add_batchnorm(&format!("{name}.shortcut_bn"), proj, spec.out_channels)?
        }
        ShortcutKind::MaxPoolProjection => {
            // Spatial window of 3 on the strided axes, 1 elsewhere (a video
            // block with stride (1, 2, 2) pools only the two spatial axes).
            let window: Vec<usize> = spec.stride.iter().map(|&s| if s == 1 { 1 } else { 3 }).collect();
            let padding: Vec<usize> = window.iter().map(|&w| (w - 1) / 2).collect();
            let pool = net.add_maxpool(
                &format!("{name}.shortcut_pool"),
                input,
                PoolSpec {
                    window,
                    stride: spec.stride.clone(),
                    padding,
                },
            );
            let proj = net.add_conv(
                &format!("{name}.shortcut_conv"),
                pool,
                conv1x1(rank, &ones(rank), spec.in_channels, spec.out_channels),
            )?;
            net.add_batchnorm(&format!("{name}.shortcut_bn"), proj, spec.out_channels)?
        }
    };

    let add = net.add_add(&format!("{name}.add"), expand_bn, shortcut);
    Ok(net.add_relu(&format!("{name}.relu"), add))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Mode;
    use crate::tensor::Tensor;

    fn stage1_levels() -> Vec<PyConvLevel> {
        vec![
            PyConvLevel::square(3, 16, 1),
            PyConvLevel::square(5, 16, 4),
            PyConvLevel::square(7, 16, 8),
            PyConvLevel::square(9, 16, 16),
        ]
    }

    #[test]
    fn downsampling_block_halves_spatial_and_expands_channels() {
        // Stage-1 first block: in 64, width 64, out 256, stride 2,
        // max-pool + projection shortcut.
        let mut net = NetworkGraph::<f32>::new(5);
        let input = net.add_input("image");
        let spec = BlockSpec {
            in_channels: 64,
            width: 64,
            out_channels: 256,
            stride: vec![2, 2],
            dilation: vec![1, 1],
            levels: stage1_levels(),
            shortcut: ShortcutKind::MaxPoolProjection,
        };
        let out = add_bottleneck(&mut net, "b", input, &spec).unwrap();
        net.mark_output("out", out);
        let x = Tensor::he_normal(&[1, 64, 112, 112], 64, 1).unwrap();
        let y = net.run(&[&x], Mode::GradCheck, 0).unwrap();
        assert_eq!(y["out"].dims(), &[1, 256, 56, 56]);
        assert!(net.nodes.iter().any(|n| n.name == "b.shortcut_pool"));
    }

    #[test]
    fn identity_block_emits_no_projection_nodes() {
        let mut net = NetworkGraph::<f32>::new(5);
        let input = net.add_input("image");
        let spec = BlockSpec {
            in_channels: 256,
            width: 64,
            out_channels: 256,
            stride: vec![1, 1],
            dilation: vec![1, 1],
            levels: stage1_levels(),
            shortcut: ShortcutKind::Identity,
        };
        add_bottleneck(&mut net, "b", input, &spec).unwrap();
        assert!(!net.nodes.iter().any(|n| n.name.contains("shortcut")));
    }

    #[test]
    fn identity_shortcut_rejects_channel_mismatch() {
        let spec = BlockSpec {
            in_channels: 64,
            width: 64,
            out_channels: 256,
            stride: vec![1, 1],
            dilation: vec![1, 1],
            levels: stage1_levels(),
            shortcut: ShortcutKind::Identity,
        };
        assert!(spec.validate().is_err());
    }
}
