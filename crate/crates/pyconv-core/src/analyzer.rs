//! Static parameter and FLOP accounting over a network graph.
//!
//! Counting convention: one multiply-accumulate of a convolution or linear
//! layer is one FLOP; batch norm, activations, pooling, residual adds and
//! upsampling count one operation per output element; data movement (concat,
//! dropout at inference) is free. Parameter counts cover learnable tensors
//! only, so batch-norm running statistics are excluded.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{NetworkGraph, NodeOp};
use crate::scalar::Scalar;

pub const CONVENTION: &str = "mac=1flop; bn/relu/pool/add/upsample=1 per output element";

/// Output shape of one node given its input shapes.
pub fn node_output_shape(op: &NodeOp, inputs: &[&[usize]]) -> Result<Vec<usize>> {
    let one = |name: &str| -> Result<&[usize]> {
        inputs
            .first()
            .copied()
            .ok_or_else(|| Error::Graph(format!("{name} node without input shape")))
    };
    match op {
        NodeOp::Input { .. } => one("input").map(|s| s.to_vec()),
        NodeOp::Conv(spec) => {
            let s = one("conv")?;
            if s[1] != spec.in_channels {
                return Err(Error::Shape(format!(
                    "conv expects {} channels, input has {}",
                    spec.in_channels, s[1]
                )));
            }
            let mut out = vec![s[0], spec.out_channels];
            out.extend(spec.out_spatial(&s[2..])?);
            Ok(out)
        }
        NodeOp::PyConv(spec) => {
            let s = one("pyconv")?;
            if s[1] != spec.in_channels {
                return Err(Error::Shape(format!(
                    "pyconv expects {} channels, input has {}",
                    spec.in_channels, s[1]
                )));
            }
            let mut out = vec![s[0], spec.out_channels()];
            out.extend(spec.level_conv_spec(0).out_spatial(&s[2..])?);
            Ok(out)
        }
        NodeOp::BatchNorm { channels } => {
            let s = one("bn")?;
            if s[1] != *channels {
                return Err(Error::Shape(format!(
                    "batchnorm over {channels} channels got input with {}",
                    s[1]
                )));
            }
            Ok(s.to_vec())
        }
        NodeOp::Relu | NodeOp::Dropout { .. } => one("elementwise").map(|s| s.to_vec()),
        NodeOp::MaxPool(spec) => {
            let s = one("maxpool")?;
            let mut out = s[..2].to_vec();
            out.extend(spec.out_spatial(&s[2..])?);
            Ok(out)
        }
        NodeOp::AdaptiveAvgPool { out_spatial } => {
            let s = one("adaptive pool")?;
            for (o, i) in out_spatial.iter().zip(&s[2..]) {
                if o > i || *o == 0 {
                    return Err(Error::Shape(format!(
                        "adaptive pool to {out_spatial:?} from {:?}",
                        &s[2..]
                    )));
                }
            }
            let mut out = s[..2].to_vec();
            out.extend_from_slice(out_spatial);
            Ok(out)
        }
        NodeOp::GlobalAvgPool => one("gap").map(|s| s[..2].to_vec()),
        NodeOp::BilinearUpsample { out_spatial } => {
            let s = one("upsample")?;
            let mut out = s[..2].to_vec();
            out.extend_from_slice(out_spatial);
            Ok(out)
        }
        NodeOp::Linear {
            in_features,
            out_features,
        } => {
            let s = one("linear")?;
            if s.len() != 2 || s[1] != *in_features {
                return Err(Error::Shape(format!(
                    "linear expects [N, {in_features}], got {s:?}"
                )));
            }
            Ok(vec![s[0], *out_features])
        }
        NodeOp::Add => {
            let s = one("add")?;
            if inputs.len() != 2 || inputs[1] != s {
                return Err(Error::Shape(format!(
                    "add expects matching extents, got {:?}",
                    inputs
                )));
            }
            Ok(s.to_vec())
        }
        NodeOp::ConcatChannels => {
            let s = one("concat")?;
            let mut channels = 0;
            for i in inputs {
                if i[0] != s[0] || i[2..] != s[2..] {
                    return Err(Error::Shape(format!(
                        "concat inputs disagree: {:?} vs {:?}",
                        i, s
                    )));
                }
                channels += i[1];
            }
            let mut out = s.to_vec();
            out[1] = channels;
            Ok(out)
        }
    }
}

/// Shape of every node's output for the given network input shapes.
pub fn infer_shapes<T: Scalar>(
    net: &NetworkGraph<T>,
    input_shapes: &[Vec<usize>],
) -> Result<Vec<Vec<usize>>> {
    if input_shapes.len() != net.inputs.len() {
        return Err(Error::Graph(format!(
            "network takes {} inputs, got {} shapes",
            net.inputs.len(),
            input_shapes.len()
        )));
    }
    let mut shapes: Vec<Vec<usize>> = Vec::with_capacity(net.nodes.len());
    for node in &net.nodes {
        let shape = match &node.op {
            NodeOp::Input { index } => input_shapes[*index].clone(),
            op => {
                let ins: Vec<&[usize]> =
                    node.inputs.iter().map(|&i| shapes[i].as_slice()).collect();
                node_output_shape(op, &ins)
                    .map_err(|e| Error::Graph(format!("{}: {e}", node.name)))?
            }
        };
        shapes.push(shape);
    }
    Ok(shapes)
}

#[derive(Debug, Clone, Serialize)]
pub struct NodeCost {
    pub name: String,
    pub kind: &'static str,
    pub output_shape: Vec<usize>,
    pub params: usize,
    pub flops: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CostReport {
    pub convention: &'static str,
    pub nodes: Vec<NodeCost>,
    pub total_params: usize,
    pub total_flops: u64,
}

impl CostReport {
    pub fn params_millions(&self) -> f64 {
        self.total_params as f64 / 1e6
    }

    pub fn flops_giga(&self) -> f64 {
        self.total_flops as f64 / 1e9
    }
}

fn node_cost(op: &NodeOp, out_shape: &[usize]) -> (usize, u64) {
    let out_elems: u64 = out_shape.iter().map(|&e| e as u64).product();
    match op {
        NodeOp::Input { .. } | NodeOp::ConcatChannels | NodeOp::Dropout { .. } => (0, 0),
        NodeOp::Conv(spec) => {
            let batch = out_shape[0] as u64;
            let area: u64 = out_shape[2..].iter().map(|&e| e as u64).product();
            let weight_params =
                spec.kernel_volume() * (spec.in_channels / spec.groups) * spec.out_channels;
            let mut flops = weight_params as u64 * area * batch;
            let mut params = weight_params;
            if spec.bias {
                params += spec.out_channels;
                flops += out_elems;
            }
            (params, flops)
        }
        NodeOp::PyConv(spec) => {
            let batch = out_shape[0] as u64;
            let area: u64 = out_shape[2..].iter().map(|&e| e as u64).product();
            let params = spec.param_count();
            (params, params as u64 * area * batch)
        }
        NodeOp::BatchNorm { channels } => (2 * channels, out_elems),
        NodeOp::Relu
        | NodeOp::MaxPool(_)
        | NodeOp::AdaptiveAvgPool { .. }
        | NodeOp::GlobalAvgPool
        | NodeOp::BilinearUpsample { .. }
        | NodeOp::Add => (0, out_elems),
        NodeOp::Linear {
            in_features,
            out_features,
        } => {
            let batch = out_shape[0] as u64;
            let params = in_features * out_features + out_features;
            let flops = (*in_features as u64) * (*out_features as u64) * batch + out_elems;
            (params, flops)
        }
    }
}

/// Walks the graph once and prices every node.
pub fn analyze<T: Scalar>(
    net: &NetworkGraph<T>,
    input_shapes: &[Vec<usize>],
) -> Result<CostReport> {
    let shapes = infer_shapes(net, input_shapes)?;
    let mut nodes = Vec::with_capacity(net.nodes.len());
    let mut total_params = 0usize;
    let mut total_flops = 0u64;
    for (node, shape) in net.nodes.iter().zip(&shapes) {
        let (params, flops) = node_cost(&node.op, shape);
        total_params += params;
        total_flops += flops;
        nodes.push(NodeCost {
            name: node.name.clone(),
            kind: node.op.kind(),
            output_shape: shape.clone(),
            params,
            flops,
        });
    }
    Ok(CostReport {
        convention: CONVENTION,
        nodes,
        total_params,
        total_flops,
    })
}

/// How an expected value is compared.
#[derive(Debug, Clone, Copy, Serialize)]
pub enum Tolerance {
    /// Actual value, rounded to 2 decimals in millions, must equal the
    /// expectation exactly.
    RoundedMillions,
    /// Relative error must not exceed the fraction.
    Relative(f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct Expectation {
    /// What is being compared, e.g. `params` or `flops@224x224`.
    pub quantity: String,
    /// Expected value in millions (params) or billions (FLOPs).
    pub expected: f64,
    pub tolerance: Tolerance,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub quantity: String,
    pub expected: f64,
    pub actual: f64,
    pub relative_delta: f64,
    pub pass: bool,
}

/// Compares a measured value against an expectation.
pub fn check(expectation: &Expectation, actual: f64) -> CheckResult {
    let delta = (actual - expectation.expected) / expectation.expected;
    let pass = match expectation.tolerance {
        Tolerance::RoundedMillions => {
            (actual * 100.0).round() / 100.0 == expectation.expected
        }
        Tolerance::Relative(tol) => delta.abs() <= tol,
    };
    CheckResult {
        quantity: expectation.quantity.clone(),
        expected: expectation.expected,
        actual,
        relative_delta: delta,
        pass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{build_classification, ClassificationConfig, Family};
    use crate::graph::NetworkGraph;
    use crate::ops::ConvSpec;

    #[test]
    fn single_conv_cost() {
        let mut net = NetworkGraph::<f32>::new(0);
        let input = net.add_input("image");
        let conv = net
            .add_conv(
                "conv",
                input,
                ConvSpec::same_padded(&[3, 3], &[1, 1], &[1, 1], 1, 64, 64, false),
            )
            .unwrap();
        net.mark_output("out", conv);
        let report = analyze(&net, &[vec![1, 64, 56, 56]]).unwrap();
        assert_eq!(report.nodes[1].params, 36_864);
        assert_eq!(report.nodes[1].flops, 115_605_504); // 36864 * 56 * 56
    }

    #[test]
    fn param_total_matches_allocated_parameter_store() {
        for family in [Family::ResNetBaseline, Family::PyConvResNet, Family::PyConvHGResNet] {
            let cfg = ClassificationConfig::toy(family, 50);
            let net = build_classification::<f32>(&cfg).unwrap();
            let report = analyze(&net, &[vec![1, 1, 32, 32]]).unwrap();
            assert_eq!(
                report.total_params,
                net.param_element_count(),
                "{family:?}: analyzer vs parameter census"
            );
        }
    }

    #[test]
    fn doubling_spatial_extent_quadruples_conv_flops() {
        let cfg = ClassificationConfig::toy(Family::PyConvResNet, 50);
        let net = build_classification::<f32>(&cfg).unwrap();
        let a = analyze(&net, &[vec![1, 1, 32, 32]]).unwrap();
        let b = analyze(&net, &[vec![1, 1, 64, 64]]).unwrap();
        for (na, nb) in a.nodes.iter().zip(&b.nodes) {
            if na.kind == "conv" || na.kind == "pyconv" {
                assert_eq!(nb.flops, 4 * na.flops, "{}", na.name);
                assert_eq!(na.params, nb.params);
            }
        }
    }

    #[test]
    fn pyconv_node_cost_equals_layer_cost_function() {
        use crate::pyconv::{pyconv_cost, PyConvLevel, PyConvSpec};
        let spec = PyConvSpec::new(
            64,
            vec![1, 1],
            vec![PyConvLevel::square(3, 16, 1), PyConvLevel::square(5, 48, 4)],
        );
        let mut net = NetworkGraph::<f32>::new(0);
        let input = net.add_input("image");
        let id = net.add_pyconv("py", input, spec.clone()).unwrap();
        net.mark_output("out", id);
        let report = analyze(&net, &[vec![1, 64, 14, 14]]).unwrap();
        let (params, flops) = pyconv_cost(&spec, &[14, 14]);
        assert_eq!(report.nodes[1].params, params);
        assert_eq!(report.nodes[1].flops, flops as u64);
    }

    #[test]
    fn rounded_millions_check_is_exact() {
        let exp = Expectation {
            quantity: "params".into(),
            expected: 25.56,
            tolerance: Tolerance::RoundedMillions,
        };
        assert!(check(&exp, 25.557_032).pass);
        assert!(!check(&exp, 25.565_001).pass);
        let rel = Expectation {
            quantity: "flops".into(),
            expected: 3.88,
            tolerance: Tolerance::Relative(0.03),
        };
        let r = check(&rel, 3.84);
        assert!(r.pass && r.relative_delta < 0.0);
        assert!(!check(&rel, 3.0).pass);
    }
}
