//! Desk-scale training and verification: SGD with momentum and coupled
//! weight decay, the step learning-rate schedule, the auxiliary-loss
//! combination, a synthetic grating dataset, a deterministic training loop
//! and a central-difference gradient checker.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{shape_err, Error, Result};
use crate::graph::{Mode, NetworkGraph};
use crate::ops::softmax_cross_entropy;
use crate::rng::{self, derive_seed};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Epochs at which the learning rate decays (inclusive: the decay
    /// applies from the milestone epoch onward).
    pub milestones: Vec<usize>,
    pub decay_factor: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Weight of an auxiliary classification loss (segmentation training).
    pub aux_weight: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            base_lr: 0.1,
            momentum: 0.9,
            weight_decay: 1e-4,
            milestones: vec![30, 60, 80],
            decay_factor: 0.1,
            epochs: 30,
            batch_size: 32,
            seed: 0,
            aux_weight: 0.4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_lr <= 0.0 || self.decay_factor <= 0.0 {
            return shape_err("learning rates must be positive".to_string());
        }
        if self.batch_size == 0 {
            return shape_err("batch size must be positive".to_string());
        }
        if self.milestones.windows(2).any(|w| w[0] >= w[1]) {
            return shape_err(format!(
                "milestones {:?} must be strictly increasing",
                self.milestones
            ));
        }
        Ok(())
    }
}

/// Learning rate at an epoch: the base rate decayed once per milestone
/// already reached.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    let decays = cfg.milestones.iter().filter(|&&m| epoch >= m).count();
    cfg.base_lr * cfg.decay_factor.powi(decays as i32)
}

/// Momentum buffers, one per parameter.
#[derive(Debug, Clone, Default)]
pub struct SgdState<T> {
    pub velocity: BTreeMap<String, Tensor<T>>,
}

/// One SGD step with coupled weight decay over every parameter (batch-norm
/// scales included): `g' = g + wd * p; v = momentum * v + g'; p -= lr * v`.
/// Parameters without a gradient entry are left untouched.
pub fn sgd_step<T: Scalar>(
    params: &mut BTreeMap<String, Tensor<T>>,
    grads: &BTreeMap<String, Tensor<T>>,
    state: &mut SgdState<T>,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<()> {
    let momentum = T::from_f64(cfg.momentum);
    let wd = T::from_f64(cfg.weight_decay);
    let lr = T::from_f64(lr);
    for (name, grad) in grads {
        let param = params
            .get_mut(name)
            .ok_or_else(|| Error::Graph(format!("gradient for unknown parameter {name}")))?;
        if param.dims() != grad.dims() {
            return shape_err(format!(
                "parameter {name}: dims {:?} vs gradient {:?}",
                param.dims(),
                grad.dims()
            ));
        }
        let velocity = state
            .velocity
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(grad.dims()).expect("velocity dims"));
        for ((p, &g), v) in param
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(velocity.data_mut())
        {
            let adjusted = g + wd * *p;
            *v = momentum * *v + adjusted;
            *p = *p - lr * *v;
        }
    }
    Ok(())
}

/// Main loss plus a weighted auxiliary loss over the same labels:
/// `L = L_main + aux_weight * L_aux`; gradients scale accordingly.
pub fn combined_loss<T: Scalar>(
    main_logits: &Tensor<T>,
    aux_logits: &Tensor<T>,
    labels: &[usize],
    aux_weight: f64,
) -> Result<(f64, Tensor<T>, Tensor<T>)> {
    let (main_loss, main_grad) = softmax_cross_entropy(main_logits, labels)?;
    let (aux_loss, aux_grad) = softmax_cross_entropy(aux_logits, labels)?;
    let w = T::from_f64(aux_weight);
    Ok((
        main_loss + aux_weight * aux_loss,
        main_grad,
        aux_grad.map(|g| g * w),
    ))
}

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    pub threshold: f64,
    /// Central-difference probes per parameter tensor.
    pub samples_per_tensor: usize,
    pub seed: u64,
    /// Corrupts one analytic gradient entry; the check must then fail
    /// (negative control).
    pub corrupt: bool,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            threshold: 1e-5,
            samples_per_tensor: 4,
            seed: 1,
            corrupt: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub epsilon: f64,
    pub threshold: f64,
    pub probes: usize,
    /// Largest analytic gradient magnitude across the network.
    pub gradient_scale: f64,
    /// Denominator floor of the error metric: coordinates whose gradients
    /// sit more than four orders of magnitude below `gradient_scale` are
    /// compared in absolute terms against this floor, since central
    /// differences cannot resolve them against roundoff.
    pub floor: f64,
    pub params: Vec<ParamCheck>,
    pub worst_param: String,
    pub max_rel_err: f64,
    pub pass: bool,
}

/// Checks a network's analytic parameter gradients against central finite
/// differences in double precision.
///
/// The loss is a fixed pseudo-random weighted sum over every network output,
/// evaluated in [`Mode::GradCheck`] (batch-norm uses batch statistics, no
/// running-stat updates, dropout disabled). ReLU active sets and max-pool
/// argmax choices are frozen from the reference forward pass, so probes
/// differentiate a function that is smooth around the reference point yet
/// has exactly the reference point's value and analytic gradient. Probe
/// coordinates are sampled deterministically per tensor.
pub fn gradcheck_network(
    net: &mut NetworkGraph<f64>,
    inputs: &[Tensor<f64>],
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let input_refs: Vec<&Tensor<f64>> = inputs.iter().collect();
    let exec = net.forward(&input_refs, Mode::GradCheck, 0)?;
    let frozen = net.freeze(&exec);
    let loss_weights: Vec<(String, Tensor<f64>)> = net
        .outputs
        .clone()
        .iter()
        .map(|(name, id)| {
            let w = Tensor::he_normal(
                exec.value(*id).dims(),
                2, // unit-ish scale
                derive_seed(cfg.seed, &format!("loss.{name}")),
            )?;
            Ok((name.clone(), w))
        })
        .collect::<Result<_>>()?;

    let loss_of = |net: &mut NetworkGraph<f64>| -> Result<f64> {
        let exec = net.forward_frozen(&input_refs, Mode::GradCheck, 0, &frozen)?;
        let mut total = 0.0;
        for (name, w) in &loss_weights {
            let id = net.output_id(name)?;
            total += exec
                .value(id)
                .data()
                .iter()
                .zip(w.data())
                .map(|(&a, &b)| a * b)
                .sum::<f64>();
        }
        Ok(total)
    };

    let grad_seed: Vec<(&str, Tensor<f64>)> = loss_weights
        .iter()
        .map(|(n, w)| (n.as_str(), w.clone()))
        .collect();
    let mut grads = net.backward(&exec, &grad_seed)?;
    drop(exec);

    if cfg.corrupt {
        if let Some(g) = grads.params.values_mut().next() {
            g.data_mut()[0] += 1.0;
        }
    }

    let gradient_scale = grads
        .params
        .values()
        .flat_map(|g| g.data().iter())
        .fold(0.0f64, |a, &b| a.max(b.abs()));
    let floor = (1e-4 * gradient_scale).max(1e-6);

    let names: Vec<String> = net.params.keys().cloned().collect();
    let mut params = Vec::with_capacity(names.len());
    let mut probes = 0usize;
    let (mut worst, mut worst_param) = (0.0f64, String::new());
    for name in names {
        let len = net.params[&name].len();
        let count = cfg.samples_per_tensor.min(len).max(1);
        let mut max_rel = 0.0f64;
        for probe in 0..count {
            // Spread probes across the tensor, offset pseudo-randomly.
            let offset = rng::unit_uniform(derive_seed(cfg.seed, &name), probe as u64);
            let index =
                (((probe as f64 + offset) / count as f64 * len as f64) as usize).min(len - 1);
            let original = net.params[&name].data()[index];

            // Fourth-order central difference (full step + half step,
            // Richardson-combined) so the residual curvature of deep
            // batch-norm chains stays below the threshold at this epsilon.
            let mut eval = |value: f64| -> Result<f64> {
                net.params.get_mut(&name).unwrap().data_mut()[index] = value;
                loss_of(net)
            };
            let p1 = eval(original + cfg.epsilon)?;
            let m1 = eval(original - cfg.epsilon)?;
            let p2 = eval(original + cfg.epsilon / 2.0)?;
            let m2 = eval(original - cfg.epsilon / 2.0)?;
            net.params.get_mut(&name).unwrap().data_mut()[index] = original;
            let fd_full = (p1 - m1) / (2.0 * cfg.epsilon);
            let fd_half = (p2 - m2) / cfg.epsilon;
            let fd = (4.0 * fd_half - fd_full) / 3.0;

            let analytic = grads
                .params
                .get(&name)
                .map(|g| g.data()[index])
                .unwrap_or(0.0);
            let rel = (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(floor);
            max_rel = max_rel.max(rel);
            probes += 1;
        }
        if max_rel > worst {
            worst = max_rel;
            worst_param = name.clone();
        }
        params.push(ParamCheck {
            name,
            max_rel_err: max_rel,
        });
    }

    Ok(GradCheckReport {
        epsilon: cfg.epsilon,
        threshold: cfg.threshold,
        probes,
        gradient_scale,
        floor,
        pass: worst <= cfg.threshold,
        worst_param,
        max_rel_err: worst,
        params,
    })
}

// ---------------------------------------------------------------------------
// Synthetic dataset and training loop
// ---------------------------------------------------------------------------

/// Labelled single-channel images, one oriented sinusoidal grating per
/// class plus Gaussian pixel noise.
#[derive(Debug, Clone)]
pub struct ToyDataset<T> {
    pub images: Tensor<T>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl<T: Scalar> ToyDataset<T> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_dims(&self) -> Vec<usize> {
        let mut d = self.images.dims().to_vec();
        d[0] = 1;
        d
    }

    /// Assembles the images at `indices` into one `[B, C, H, W]` batch.
    pub fn batch(&self, indices: &[usize]) -> (Tensor<T>, Vec<usize>) {
        let per_image: usize = self.images.dims()[1..].iter().product();
        let mut dims = self.images.dims().to_vec();
        dims[0] = indices.len();
        let mut data = Vec::with_capacity(indices.len() * per_image);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(&self.images.data()[i * per_image..(i + 1) * per_image]);
            labels.push(self.labels[i]);
        }
        (Tensor::from_vec(&dims, data).expect("batch dims"), labels)
    }
}

/// Class `k` is a sinusoidal grating with class-specific frequency and
/// orientation; each sample adds independent Gaussian noise (sigma 0.3).
/// Classes are balanced and the whole set is a pure function of the seed.
pub fn make_toy_dataset<T: Scalar>(
    seed: u64,
    n_per_class: usize,
    classes: usize,
    size: usize,
) -> ToyDataset<T> {
    let n = n_per_class * classes;
    let mut data = Vec::with_capacity(n * size * size);
    let mut labels = Vec::with_capacity(n);
    let noise_seed = derive_seed(seed, "noise");
    let mut index = 0u64;
    for class in 0..classes {
        let angle = std::f64::consts::PI * class as f64 / classes as f64;
        let freq = 1.5 + 0.75 * class as f64;
        let (sin_a, cos_a) = angle.sin_cos();
        for _ in 0..n_per_class {
            for y in 0..size {
                for x in 0..size {
                    let u = x as f64 / size as f64;
                    let v = y as f64 / size as f64;
                    let phase = 2.0 * std::f64::consts::PI * freq * (u * cos_a + v * sin_a);
                    let value = phase.sin() + 0.3 * rng::standard_normal(noise_seed, index);
                    data.push(T::from_f64(value));
                    index += 1;
                }
            }
            labels.push(class);
        }
    }
    ToyDataset {
        images: Tensor::from_vec(&[n, 1, size, size], data).expect("dataset dims"),
        labels,
        classes,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    /// Mean training-batch cross-entropy over the epoch.
    pub loss: f64,
    /// Accuracy over the full training set, evaluated after the epoch.
    pub accuracy: f64,
}

/// Mean loss and accuracy of the network over the dataset (eval mode).
pub fn evaluate<T: Scalar>(
    net: &mut NetworkGraph<T>,
    dataset: &ToyDataset<T>,
    batch_size: usize,
) -> Result<(f64, f64)> {
    let n = dataset.len();
    let mut correct = 0usize;
    let mut loss_sum = 0.0;
    let mut start = 0;
    while start < n {
        let end = (start + batch_size).min(n);
        let indices: Vec<usize> = (start..end).collect();
        let (batch, labels) = dataset.batch(&indices);
        let outs = net.run(&[&batch], Mode::Eval, 0)?;
        let logits = &outs["logits"];
        let (loss, _) = softmax_cross_entropy(logits, &labels)?;
        loss_sum += loss * labels.len() as f64;
        let k = logits.dims()[1];
        for (row, &label) in labels.iter().enumerate() {
            let row_data = &logits.data()[row * k..(row + 1) * k];
            let argmax = row_data
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            if argmax == label {
                correct += 1;
            }
        }
        start = end;
    }
    Ok((loss_sum / n as f64, correct as f64 / n as f64))
}

/// Runs mini-batch SGD with the step schedule over the dataset.
///
/// Fully deterministic for a given `(net seed, dataset, config)`: the epoch
/// shuffle derives from `(cfg.seed, epoch)` and dropout masks from the step
/// counter, so a run resumed from epoch `k` continues the exact trajectory.
pub fn train_toy<T: Scalar>(
    net: &mut NetworkGraph<T>,
    dataset: &ToyDataset<T>,
    cfg: &TrainConfig,
    state: &mut SgdState<T>,
    start_epoch: usize,
) -> Result<Vec<EpochStats>> {
    cfg.validate()?;
    let n = dataset.len();
    if n == 0 {
        return shape_err("empty dataset".to_string());
    }
    let mut history = Vec::new();
    for epoch in start_epoch..cfg.epochs {
        let lr = lr_at(epoch, cfg);
        let order = rng::permutation(derive_seed(cfg.seed, &format!("epoch{epoch}")), n);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let (batch, labels) = dataset.batch(chunk);
            let step = (epoch * n.div_ceil(cfg.batch_size) + batch_idx) as u64;
            let exec = net.forward(&[&batch], Mode::Train, derive_seed(cfg.seed, "dropout") ^ step)?;
            let logits_id = net.output_id("logits")?;
            let (loss, grad) = softmax_cross_entropy(exec.value(logits_id), &labels)?;
            let grads = net.backward(&exec, &[("logits", grad)])?;
            sgd_step(&mut net.params, &grads.params, state, lr, cfg)?;
            loss_sum += loss * labels.len() as f64;
            seen += labels.len();
        }
        let (_, accuracy) = evaluate(net, dataset, cfg.batch_size)?;
        history.push(EpochStats {
            epoch,
            lr,
            loss: loss_sum / seen as f64,
            accuracy,
        });
    }
    Ok(history)
}
