//! Layer-node DAG with named parameters, a forward executor and
//! reverse-order backpropagation.
//!
//! Nodes are stored in topological order (every input id precedes its
//! consumer), parameters and batch-norm running statistics live in named
//! stores, and outputs are exposed under names like `logits`, `main`, `aux`
//! or `loc0`/`conf0`. Builders in [`crate::arch`] assemble graphs; the
//! executor only walks them.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::ops::{self, BnMode, ConvSpec, PoolSpec};
use crate::pyconv::{self, PyConvSpec};
use crate::rng::derive_seed;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub type NodeId = usize;

/// What a node computes. Specs carry everything shape inference and the
/// cost analyzer need.
#[derive(Debug, Clone)]
pub enum NodeOp {
    /// Placeholder for the `index`-th network input.
    Input { index: usize },
    Conv(ConvSpec),
    PyConv(PyConvSpec),
    BatchNorm { channels: usize },
    Relu,
    MaxPool(PoolSpec),
    AdaptiveAvgPool { out_spatial: Vec<usize> },
    GlobalAvgPool,
    BilinearUpsample { out_spatial: Vec<usize> },
    Linear { in_features: usize, out_features: usize },
    Add,
    ConcatChannels,
    Dropout { p: f64 },
}

impl NodeOp {
    pub fn kind(&self) -> &'static str {
        match self {
            NodeOp::Input { .. } => "input",
            NodeOp::Conv(_) => "conv",
            NodeOp::PyConv(_) => "pyconv",
            NodeOp::BatchNorm { .. } => "bn",
            NodeOp::Relu => "relu",
            NodeOp::MaxPool(_) => "maxpool",
            NodeOp::AdaptiveAvgPool { .. } => "adaptive-avgpool",
            NodeOp::GlobalAvgPool => "global-avgpool",
            NodeOp::BilinearUpsample { .. } => "bilinear-upsample",
            NodeOp::Linear { .. } => "linear",
            NodeOp::Add => "add",
            NodeOp::ConcatChannels => "concat",
            NodeOp::Dropout { .. } => "dropout",
        }
    }
}

#[derive(Debug, Clone)]
pub struct LayerNode {
    pub name: String,
    pub op: NodeOp,
    pub inputs: Vec<NodeId>,
    /// Names of this node's learnable tensors in the parameter store.
    pub params: Vec<String>,
}

/// Execution mode; batch norm and dropout behave differently per mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics + running-stat updates, live dropout.
    Train,
    /// Running statistics, dropout disabled.
    Eval,
    /// Batch statistics like `Train`, but no running-stat updates and
    /// dropout disabled, so repeated forwards are side-effect free and the
    /// function stays differentiable for finite-difference checks.
    GradCheck,
}

impl Mode {
    fn bn_mode(self) -> BnMode {
        match self {
            Mode::Train => BnMode::Train {
                update_running: true,
            },
            Mode::GradCheck => BnMode::Train {
                update_running: false,
            },
            Mode::Eval => BnMode::Eval,
        }
    }

    fn dropout_live(self) -> bool {
        self == Mode::Train
    }
}

/// Per-node context saved by the forward pass for the backward pass.
enum Saved<T> {
    None,
    MaxPool { argmax: Vec<usize> },
    BatchNorm(ops::BatchNormState<T>),
    Dropout { mask: Tensor<T> },
}

/// ReLU activation sets and max-pool argmax choices captured from a
/// reference forward pass.
///
/// A forward pass run against this state applies the captured masks and
/// gather indices instead of recomputing them, which removes the kinks those
/// selections introduce: around the reference point the frozen function is
/// smooth, while its value and analytic gradient at the point itself are
/// identical to the live function's. Finite-difference checks probe the
/// frozen function so that central differences converge at realistic
/// epsilons on deep networks.
#[derive(Debug, Clone, Default)]
pub struct FrozenActivations {
    relu_masks: BTreeMap<NodeId, Vec<bool>>,
    pool_argmax: BTreeMap<NodeId, Vec<usize>>,
}

/// All intermediate values of one forward pass.
pub struct Execution<T> {
    values: Vec<Tensor<T>>,
    saved: Vec<Saved<T>>,
    mode: Mode,
}

impl<T: Scalar> Execution<T> {
    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.values[id]
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }
}

/// Gradients produced by the backward pass.
pub struct Gradients<T> {
    /// Per parameter name, same dims as the parameter.
    pub params: BTreeMap<String, Tensor<T>>,
    /// Per network input (by input index), present when a gradient reached it.
    pub inputs: Vec<Option<Tensor<T>>>,
}

#[derive(Debug, Clone)]
pub struct NetworkGraph<T> {
    pub nodes: Vec<LayerNode>,
    /// Learnable tensors by name.
    pub params: BTreeMap<String, Tensor<T>>,
    /// Non-learnable state (batch-norm running statistics) by name.
    pub buffers: BTreeMap<String, Tensor<T>>,
    /// Named network inputs in positional order.
    pub inputs: Vec<(String, NodeId)>,
    /// Named network outputs.
    pub outputs: Vec<(String, NodeId)>,
    /// Seed all parameter initialization derives from.
    pub seed: u64,
}

impl<T: Scalar> NetworkGraph<T> {
    pub fn new(seed: u64) -> Self {
        Self {
            nodes: Vec::new(),
            params: BTreeMap::new(),
            buffers: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            seed,
        }
    }

    pub fn output_id(&self, name: &str) -> Result<NodeId> {
        self.outputs
            .iter()
            .find(|(n, _)| n == name)
            .map(|&(_, id)| id)
            .ok_or_else(|| Error::Graph(format!("no output named {name}")))
    }

    pub fn param_element_count(&self) -> usize {
        self.params.values().map(|t| t.len()).sum()
    }

    fn add_node(&mut self, name: &str, op: NodeOp, inputs: Vec<NodeId>, params: Vec<String>) -> NodeId {
        for &i in &inputs {
            assert!(i < self.nodes.len(), "node {name} uses undefined input {i}");
        }
        self.nodes.push(LayerNode {
            name: name.to_string(),
            op,
            inputs,
            params,
        });
        self.nodes.len() - 1
    }

    fn add_param(&mut self, name: String, tensor: Tensor<T>) -> String {
        let prev = self.params.insert(name.clone(), tensor);
        assert!(prev.is_none(), "duplicate parameter name {name}");
        name
    }

    pub fn add_input(&mut self, name: &str) -> NodeId {
        let index = self.inputs.len();
        let id = self.add_node(name, NodeOp::Input { index }, vec![], vec![]);
        self.inputs.push((name.to_string(), id));
        id
    }

    pub fn mark_output(&mut self, name: &str, id: NodeId) {
        self.outputs.push((name.to_string(), id));
    }

    /// Convolution node; weights are He-initialized from the node name and
    /// graph seed, biases (when present) start at zero.
    pub fn add_conv(&mut self, name: &str, input: NodeId, spec: ConvSpec) -> Result<NodeId> {
        spec.validate()?;
        let fan_in = spec.kernel_volume() * spec.in_channels / spec.groups;
        let w = Tensor::he_normal(
            &spec.weight_dims(),
            fan_in,
            derive_seed(self.seed, &format!("{name}.weight")),
        )?;
        let mut params = vec![self.add_param(format!("{name}.weight"), w)];
        if spec.bias {
            let b = Tensor::zeros(&[spec.out_channels])?;
            params.push(self.add_param(format!("{name}.bias"), b));
        }
        Ok(self.add_node(name, NodeOp::Conv(spec), vec![input], params))
    }

    /// PyConv node; one weight tensor per level.
    pub fn add_pyconv(&mut self, name: &str, input: NodeId, spec: PyConvSpec) -> Result<NodeId> {
        let violations = pyconv::validate(&spec);
        if !violations.is_empty() {
            return Err(Error::Spec(format!("{name}: {}", violations.join("; "))));
        }
        let mut params = Vec::with_capacity(spec.levels.len());
        for i in 0..spec.levels.len() {
            let conv = spec.level_conv_spec(i);
            let fan_in = conv.kernel_volume() * conv.in_channels / conv.groups;
            let pname = format!("{name}.l{i}.weight");
            let w = Tensor::he_normal(&conv.weight_dims(), fan_in, derive_seed(self.seed, &pname))?;
            params.push(self.add_param(pname, w));
        }
        Ok(self.add_node(name, NodeOp::PyConv(spec), vec![input], params))
    }

    /// Batch-norm node: gamma starts at one, beta at zero; running mean/var
    /// buffers start at zero/one.
    pub fn add_batchnorm(&mut self, name: &str, input: NodeId, channels: usize) -> Result<NodeId> {
        let gamma = self.add_param(format!("{name}.gamma"), Tensor::filled(&[channels], T::one())?);
        let beta = self.add_param(format!("{name}.beta"), Tensor::zeros(&[channels])?);
        self.buffers
            .insert(format!("{name}.running_mean"), Tensor::zeros(&[channels])?);
        self.buffers.insert(
            format!("{name}.running_var"),
            Tensor::filled(&[channels], T::one())?,
        );
        Ok(self.add_node(name, NodeOp::BatchNorm { channels }, vec![input], vec![gamma, beta]))
    }

    pub fn add_relu(&mut self, name: &str, input: NodeId) -> NodeId {
        self.add_node(name, NodeOp::Relu, vec![input], vec![])
    }

    pub fn add_maxpool(&mut self, name: &str, input: NodeId, spec: PoolSpec) -> NodeId {
        self.add_node(name, NodeOp::MaxPool(spec), vec![input], vec![])
    }

    pub fn add_adaptive_avg_pool(&mut self, name: &str, input: NodeId, out_spatial: Vec<usize>) -> NodeId {
        self.add_node(name, NodeOp::AdaptiveAvgPool { out_spatial }, vec![input], vec![])
    }

    pub fn add_global_avg_pool(&mut self, name: &str, input: NodeId) -> NodeId {
        self.add_node(name, NodeOp::GlobalAvgPool, vec![input], vec![])
    }

    pub fn add_bilinear_upsample(&mut self, name: &str, input: NodeId, out_spatial: Vec<usize>) -> NodeId {
        self.add_node(name, NodeOp::BilinearUpsample { out_spatial }, vec![input], vec![])
    }

    /// Linear node; weight is He-initialized, bias starts at zero.
    pub fn add_linear(&mut self, name: &str, input: NodeId, in_features: usize, out_features: usize) -> Result<NodeId> {
        let w = Tensor::he_normal(
            &[out_features, in_features],
            in_features,
            derive_seed(self.seed, &format!("{name}.weight")),
        )?;
        let params = vec![
            self.add_param(format!("{name}.weight"), w),
            self.add_param(format!("{name}.bias"), Tensor::zeros(&[out_features])?),
        ];
        Ok(self.add_node(
            name,
            NodeOp::Linear {
                in_features,
                out_features,
            },
            vec![input],
            params,
        ))
    }

    pub fn add_add(&mut self, name: &str, lhs: NodeId, rhs: NodeId) -> NodeId {
        self.add_node(name, NodeOp::Add, vec![lhs, rhs], vec![])
    }

    pub fn add_concat(&mut self, name: &str, inputs: Vec<NodeId>) -> NodeId {
        self.add_node(name, NodeOp::ConcatChannels, inputs, vec![])
    }

    pub fn add_dropout(&mut self, name: &str, input: NodeId, p: f64) -> NodeId {
        self.add_node(name, NodeOp::Dropout { p }, vec![input], vec![])
    }

    fn param(&self, name: &str) -> &Tensor<T> {
        self.params
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"))
    }

    /// Captures the activation choices of an execution for frozen replays.
    pub fn freeze(&self, exec: &Execution<T>) -> FrozenActivations {
        let mut frozen = FrozenActivations::default();
        for (id, node) in self.nodes.iter().enumerate() {
            match &node.op {
                NodeOp::Relu => {
                    let mask = exec.values[node.inputs[0]]
                        .data()
                        .iter()
                        .map(|&x| x > T::zero())
                        .collect();
                    frozen.relu_masks.insert(id, mask);
                }
                NodeOp::MaxPool(_) => {
                    if let Saved::MaxPool { argmax } = &exec.saved[id] {
                        frozen.pool_argmax.insert(id, argmax.clone());
                    }
                }
                _ => {}
            }
        }
        frozen
    }

    /// Runs the graph. `dropout_seed` fixes the dropout masks of this pass
    /// (ignored outside `Mode::Train`); pass the training step counter.
    pub fn forward(
        &mut self,
        inputs: &[&Tensor<T>],
        mode: Mode,
        dropout_seed: u64,
    ) -> Result<Execution<T>> {
        self.forward_inner(inputs, mode, dropout_seed, None)
    }

    /// Like [`Self::forward`], but replays the given activation choices.
    pub fn forward_frozen(
        &mut self,
        inputs: &[&Tensor<T>],
        mode: Mode,
        dropout_seed: u64,
        frozen: &FrozenActivations,
    ) -> Result<Execution<T>> {
        self.forward_inner(inputs, mode, dropout_seed, Some(frozen))
    }

    fn forward_inner(
        &mut self,
        inputs: &[&Tensor<T>],
        mode: Mode,
        dropout_seed: u64,
        frozen: Option<&FrozenActivations>,
    ) -> Result<Execution<T>> {
        if inputs.len() != self.inputs.len() {
            return Err(Error::Graph(format!(
                "network takes {} inputs, got {}",
                self.inputs.len(),
                inputs.len()
            )));
        }
        let mut values: Vec<Tensor<T>> = Vec::with_capacity(self.nodes.len());
        let mut saved: Vec<Saved<T>> = Vec::with_capacity(self.nodes.len());
        for id in 0..self.nodes.len() {
            let node = self.nodes[id].clone();
            let mut ctx = Saved::None;
            let value = match &node.op {
                NodeOp::Input { index } => inputs[*index].clone(),
                NodeOp::Conv(spec) => {
                    let x = &values[node.inputs[0]];
                    let w = self.param(&node.params[0]).clone();
                    let b = spec.bias.then(|| self.param(&node.params[1]).clone());
                    ops::conv_forward(x, &w, b.as_ref(), spec)?
                }
                NodeOp::PyConv(spec) => {
                    let x = &values[node.inputs[0]];
                    let ws: Vec<Tensor<T>> =
                        node.params.iter().map(|p| self.param(p).clone()).collect();
                    pyconv::pyconv_forward(x, spec, &ws)?
                }
                NodeOp::BatchNorm { .. } => {
                    let gamma = self.param(&node.params[0]).clone();
                    let beta = self.param(&node.params[1]).clone();
                    let mut rm = self
                        .buffers
                        .remove(&format!("{}.running_mean", node.name))
                        .expect("running mean buffer");
                    let mut rv = self
                        .buffers
                        .remove(&format!("{}.running_var", node.name))
                        .expect("running var buffer");
                    let result = ops::batchnorm_forward(
                        &values[node.inputs[0]],
                        &gamma,
                        &beta,
                        &mut rm,
                        &mut rv,
                        mode.bn_mode(),
                    );
                    self.buffers
                        .insert(format!("{}.running_mean", node.name), rm);
                    self.buffers
                        .insert(format!("{}.running_var", node.name), rv);
                    let (out, state) = result?;
                    ctx = Saved::BatchNorm(state);
                    out
                }
                NodeOp::Relu => {
                    let x = &values[node.inputs[0]];
                    match frozen.and_then(|f| f.relu_masks.get(&id)) {
                        Some(mask) => {
                            assert_eq!(mask.len(), x.len(), "frozen relu mask shape");
                            let data = x
                                .data()
                                .iter()
                                .zip(mask)
                                .map(|(&v, &keep)| if keep { v } else { T::zero() })
                                .collect();
                            Tensor::from_vec(x.dims(), data)?
                        }
                        None => ops::relu_forward(x),
                    }
                }
                NodeOp::MaxPool(spec) => {
                    let x = &values[node.inputs[0]];
                    match frozen.and_then(|f| f.pool_argmax.get(&id)) {
                        Some(argmax) => {
                            let out_spatial = spec.out_spatial(x.spatial())?;
                            let mut dims = vec![x.batch(), x.channels()];
                            dims.extend(out_spatial);
                            let data = argmax.iter().map(|&src| x.data()[src]).collect();
                            ctx = Saved::MaxPool {
                                argmax: argmax.clone(),
                            };
                            Tensor::from_vec(&dims, data)?
                        }
                        None => {
                            let (out, argmax) = ops::maxpool_forward(x, spec)?;
                            ctx = Saved::MaxPool { argmax };
                            out
                        }
                    }
                }
                NodeOp::AdaptiveAvgPool { out_spatial } => {
                    ops::adaptive_avg_pool_forward(&values[node.inputs[0]], out_spatial)?
                }
                NodeOp::GlobalAvgPool => ops::global_avg_pool_forward(&values[node.inputs[0]])?,
                NodeOp::BilinearUpsample { out_spatial } => {
                    ops::bilinear_forward(&values[node.inputs[0]], out_spatial)?
                }
                NodeOp::Linear { .. } => ops::linear_forward(
                    &values[node.inputs[0]],
                    self.param(&node.params[0]),
                    self.param(&node.params[1]),
                )?,
                NodeOp::Add => {
                    let mut out = values[node.inputs[0]].clone();
                    out.add_assign(&values[node.inputs[1]])?;
                    out
                }
                NodeOp::ConcatChannels => {
                    let parts: Vec<&Tensor<T>> =
                        node.inputs.iter().map(|&i| &values[i]).collect();
                    Tensor::concat_channels(&parts)?
                }
                NodeOp::Dropout { p } => {
                    if mode.dropout_live() && *p > 0.0 {
                        let seed = derive_seed(dropout_seed, &node.name);
                        let (out, mask) = ops::dropout_forward(&values[node.inputs[0]], *p, seed);
                        ctx = Saved::Dropout { mask };
                        out
                    } else {
                        values[node.inputs[0]].clone()
                    }
                }
            };
            values.push(value);
            saved.push(ctx);
        }
        Ok(Execution { values, saved, mode })
    }

    /// Convenience: forward and collect the named outputs.
    pub fn run(
        &mut self,
        inputs: &[&Tensor<T>],
        mode: Mode,
        dropout_seed: u64,
    ) -> Result<BTreeMap<String, Tensor<T>>> {
        let exec = self.forward(inputs, mode, dropout_seed)?;
        Ok(self
            .outputs
            .iter()
            .map(|(name, id)| (name.clone(), exec.values[*id].clone()))
            .collect())
    }

    /// Backpropagates the given output gradients through the recorded
    /// execution, accumulating parameter gradients by name. Where an output
    /// feeds several consumers the incoming gradients sum.
    pub fn backward(
        &self,
        exec: &Execution<T>,
        output_grads: &[(&str, Tensor<T>)],
    ) -> Result<Gradients<T>> {
        let mut node_grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        for (name, grad) in output_grads {
            let id = self.output_id(name)?;
            if grad.dims() != exec.values[id].dims() {
                return Err(Error::Graph(format!(
                    "gradient for output {name} has dims {:?}, value has {:?}",
                    grad.dims(),
                    exec.values[id].dims()
                )));
            }
            accumulate(&mut node_grads[id], grad);
        }

        let mut param_grads: BTreeMap<String, Tensor<T>> = BTreeMap::new();
        let mut input_grads: Vec<Option<Tensor<T>>> = vec![None; self.inputs.len()];

        for id in (0..self.nodes.len()).rev() {
            let grad = match node_grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[id];
            match &node.op {
                NodeOp::Input { index } => accumulate(&mut input_grads[*index], &grad),
                NodeOp::Conv(spec) => {
                    let x = &exec.values[node.inputs[0]];
                    let w = self.param(&node.params[0]);
                    let grads = ops::conv_backward(x, w, spec, &grad)?;
                    accumulate(&mut node_grads[node.inputs[0]], &grads.input);
                    add_param_grad(&mut param_grads, &node.params[0], grads.weights)?;
                    if let Some(gb) = grads.bias {
                        add_param_grad(&mut param_grads, &node.params[1], gb)?;
                    }
                }
                NodeOp::PyConv(spec) => {
                    let x = &exec.values[node.inputs[0]];
                    let ws: Vec<Tensor<T>> =
                        node.params.iter().map(|p| self.param(p).clone()).collect();
                    let grads = pyconv::pyconv_backward(x, spec, &ws, &grad)?;
                    accumulate(&mut node_grads[node.inputs[0]], &grads.input);
                    for (pname, gw) in node.params.iter().zip(grads.level_weights) {
                        add_param_grad(&mut param_grads, pname, gw)?;
                    }
                }
                NodeOp::BatchNorm { .. } => {
                    let state = match &exec.saved[id] {
                        Saved::BatchNorm(s) => s,
                        _ => unreachable!("batchnorm node without saved state"),
                    };
                    let x = &exec.values[node.inputs[0]];
                    let gamma = self.param(&node.params[0]);
                    let grads = ops::batchnorm_backward(x, gamma, state, &grad)?;
                    accumulate(&mut node_grads[node.inputs[0]], &grads.input);
                    add_param_grad(&mut param_grads, &node.params[0], grads.gamma)?;
                    add_param_grad(&mut param_grads, &node.params[1], grads.beta)?;
                }
                NodeOp::Relu => {
                    let gin = ops::relu_backward(&exec.values[node.inputs[0]], &grad)?;
                    accumulate(&mut node_grads[node.inputs[0]], &gin);
                }
                NodeOp::MaxPool(_) => {
                    let argmax = match &exec.saved[id] {
                        Saved::MaxPool { argmax } => argmax,
                        _ => unreachable!("maxpool node without saved argmax"),
                    };
                    let gin = ops::maxpool_backward(
                        exec.values[node.inputs[0]].dims(),
                        argmax,
                        &grad,
                    )?;
                    accumulate(&mut node_grads[node.inputs[0]], &gin);
                }
                NodeOp::AdaptiveAvgPool { .. } => {
                    let gin = ops::adaptive_avg_pool_backward(
                        exec.values[node.inputs[0]].dims(),
                        &grad,
                    )?;
                    accumulate(&mut node_grads[node.inputs[0]], &gin);
                }
                NodeOp::GlobalAvgPool => {
                    let gin =
                        ops::global_avg_pool_backward(exec.values[node.inputs[0]].dims(), &grad)?;
                    accumulate(&mut node_grads[node.inputs[0]], &gin);
                }
                NodeOp::BilinearUpsample { .. } => {
                    let gin = ops::bilinear_backward(exec.values[node.inputs[0]].dims(), &grad)?;
                    accumulate(&mut node_grads[node.inputs[0]], &gin);
                }
                NodeOp::Linear { .. } => {
                    let x = &exec.values[node.inputs[0]];
                    let w = self.param(&node.params[0]);
                    let grads = ops::linear_backward(x, w, &grad)?;
                    accumulate(&mut node_grads[node.inputs[0]], &grads.input);
                    add_param_grad(&mut param_grads, &node.params[0], grads.weights)?;
                    add_param_grad(&mut param_grads, &node.params[1], grads.bias)?;
                }
                NodeOp::Add => {
                    accumulate(&mut node_grads[node.inputs[0]], &grad);
                    accumulate(&mut node_grads[node.inputs[1]], &grad);
                }
                NodeOp::ConcatChannels => {
                    let mut offset = 0;
                    for &src in &node.inputs {
                        let c = exec.values[src].channels();
                        let part = grad.slice_channels(offset, c)?;
                        offset += c;
                        accumulate(&mut node_grads[src], &part);
                    }
                }
                NodeOp::Dropout { .. } => match &exec.saved[id] {
                    Saved::Dropout { mask } => {
                        let gin = ops::dropout_backward(mask, &grad)?;
                        accumulate(&mut node_grads[node.inputs[0]], &gin);
                    }
                    _ => accumulate(&mut node_grads[node.inputs[0]], &grad),
                },
            }
        }

        Ok(Gradients {
            params: param_grads,
            inputs: input_grads,
        })
    }
}

fn accumulate<T: Scalar>(slot: &mut Option<Tensor<T>>, grad: &Tensor<T>) {
    match slot {
        Some(existing) => existing.add_assign(grad).expect("gradient extents agree"),
        None => *slot = Some(grad.clone()),
    }
}

fn add_param_grad<T: Scalar>(
    store: &mut BTreeMap<String, Tensor<T>>,
    name: &str,
    grad: Tensor<T>,
) -> Result<()> {
    match store.get_mut(name) {
        Some(existing) => existing.add_assign(&grad),
        None => {
            store.insert(name.to_string(), grad);
            Ok(())
        }
    }
}
