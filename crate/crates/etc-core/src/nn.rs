//! Small dense feedforward networks: Glorot init, backprop, SGD and
//! bias-corrected Adam, and a deterministic minibatch training loop.
//! Just enough to train the encoders, classifier heads, and the domain
//! discriminator at desk scale — no autograd, gradients are hand-derived
//! and checked against central finite differences in the tests.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::linalg::Matrix;
use crate::rng;

/// Probabilities are clamped to this floor before taking logs.
const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Softmax,
    Linear,
}

impl Activation {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "relu" => Activation::Relu,
            "tanh" => Activation::Tanh,
            "sigmoid" => Activation::Sigmoid,
            "softmax" => Activation::Softmax,
            "linear" => Activation::Linear,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown activation {other:?}"
                )))
            }
        })
    }

    fn apply(self, z: &mut [f64]) {
        match self {
            Activation::Relu => {
                for v in z.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            Activation::Tanh => {
                for v in z.iter_mut() {
                    *v = v.tanh();
                }
            }
            Activation::Sigmoid => {
                for v in z.iter_mut() {
                    *v = 1.0 / (1.0 + (-*v).exp());
                }
            }
            Activation::Softmax => {
                let max = z.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                let mut sum = 0.0;
                for v in z.iter_mut() {
                    *v = (*v - max).exp();
                    sum += *v;
                }
                for v in z.iter_mut() {
                    *v /= sum;
                }
            }
            Activation::Linear => {}
        }
    }

    /// d(activation)/d(preactivation), given both sides of the mapping.
    /// Softmax is never differentiated element-wise; its gradient is fused
    /// with cross-entropy at the output.
    fn derivative(self, pre: f64, post: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - post * post,
            Activation::Sigmoid => post * (1.0 - post),
            Activation::Linear => 1.0,
            Activation::Softmax => unreachable!("softmax is only valid as a fused output layer"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input_dim: usize, output_dim: usize, activation: Activation) -> Self {
        LayerSpec {
            input_dim,
            output_dim,
            activation,
        }
    }
}

/// One dense layer: `out = activation(weights · x + biases)`.
/// Weights are `output_dim × input_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Matrix,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::new(self.input_dim(), self.output_dim(), self.activation)
    }

    fn forward_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for i in 0..self.output_dim() {
            let row = self.weights.row(i);
            let mut z = self.biases[i];
            for (w, v) in row.iter().zip(x) {
                z += w * v;
            }
            out.push(z);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layers: Vec<Layer>,
}

/// Per-layer activations captured during a forward pass.
/// `activations[0]` is the input; `activations[l + 1]` and
/// `preactivations[l]` belong to layer `l`.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub activations: Vec<Vec<f64>>,
    pub preactivations: Vec<Vec<f64>>,
}

impl Network {
    /// All-zero parameters (useful for tests and delta buffers).
    pub fn zeros(specs: &[LayerSpec]) -> Result<Self> {
        let layers = specs
            .iter()
            .map(|s| Layer {
                weights: Matrix::zeros(s.output_dim, s.input_dim),
                biases: vec![0.0; s.output_dim],
                activation: s.activation,
            })
            .collect();
        let net = Network { layers };
        net.validate()?;
        Ok(net)
    }

    /// Glorot-uniform weights in ±sqrt(6 / (fan_in + fan_out)), zero biases.
    pub fn glorot(specs: &[LayerSpec], rng: &mut impl Rng) -> Result<Self> {
        let mut net = Network::zeros(specs)?;
        for layer in &mut net.layers {
            let limit = (6.0 / (layer.input_dim() + layer.output_dim()) as f64).sqrt();
            for w in layer.weights.data_mut() {
                *w = rng.gen_range(-limit..limit);
            }
        }
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidNetwork("no layers".to_string()));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.biases.len() != layer.output_dim() {
                return Err(Error::InvalidNetwork(format!(
                    "layer {i}: {} biases for {} outputs",
                    layer.biases.len(),
                    layer.output_dim()
                )));
            }
            if i + 1 < self.layers.len() {
                if layer.activation == Activation::Softmax {
                    return Err(Error::InvalidNetwork(
                        "softmax is only allowed on the final layer".to_string(),
                    ));
                }
                if self.layers[i + 1].input_dim() != layer.output_dim() {
                    return Err(Error::InvalidNetwork(format!(
                        "layer {} input {} does not chain with layer {i} output {}",
                        i + 1,
                        self.layers[i + 1].input_dim(),
                        layer.output_dim()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("validated").output_dim()
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers {
            layer.forward_into(&cur, &mut next);
            layer.activation.apply(&mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Forward pass keeping every intermediate vector (for backprop and
    /// for tapping hidden activations).
    pub fn forward_trace(&self, x: &[f64]) -> Result<ForwardTrace> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut preactivations = Vec::with_capacity(self.layers.len());
        activations.push(x.to_vec());
        for layer in &self.layers {
            let mut z = Vec::new();
            layer.forward_into(activations.last().expect("non-empty"), &mut z);
            preactivations.push(z.clone());
            layer.activation.apply(&mut z);
            activations.push(z);
        }
        Ok(ForwardTrace {
            activations,
            preactivations,
        })
    }

    /// Order-preserving batched forward.
    pub fn forward_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        for x in xs {
            if x.len() != self.input_dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.input_dim(),
                    got: x.len(),
                });
            }
        }
        Ok(exec::map_collect(xs, |x| {
            self.forward(x).expect("dims checked above")
        }))
    }

    /// Splits into the first `at` layers and the rest.
    pub fn split_off(&self, at: usize) -> Result<(Network, Network)> {
        if at == 0 || at >= self.layers.len() {
            return Err(Error::LayerOutOfRange {
                index: at,
                n_layers: self.layers.len(),
            });
        }
        let head = Network {
            layers: self.layers[..at].to_vec(),
        };
        let tail = Network {
            layers: self.layers[at..].to_vec(),
        };
        head.validate()?;
        tail.validate()?;
        Ok((head, tail))
    }

    /// New network running `self` then `other`.
    pub fn concat(&self, other: &Network) -> Result<Network> {
        let mut layers = self.layers.clone();
        layers.extend(other.layers.iter().cloned());
        let net = Network { layers };
        net.validate()?;
        Ok(net)
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.data().len() + l.biases.len())
            .sum()
    }

    /// Flat parameter accessors: per layer, weights row-major then biases.
    pub fn get_param(&self, mut idx: usize) -> f64 {
        for layer in &self.layers {
            let nw = layer.weights.data().len();
            if idx < nw {
                return layer.weights.data()[idx];
            }
            idx -= nw;
            if idx < layer.biases.len() {
                return layer.biases[idx];
            }
            idx -= layer.biases.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set_param(&mut self, mut idx: usize, v: f64) {
        for layer in &mut self.layers {
            let nw = layer.weights.data().len();
            if idx < nw {
                layer.weights.data_mut()[idx] = v;
                return;
            }
            idx -= nw;
            if idx < layer.biases.len() {
                layer.biases[idx] = v;
                return;
            }
            idx -= layer.biases.len();
        }
        panic!("parameter index out of range");
    }
}

/// Training targets; the loss is implied by the variant. Class targets
/// use softmax cross-entropy, binary targets use sigmoid binary
/// cross-entropy on a single output.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    Classes(&'a [usize]),
    Binary(&'a [f64]),
}

enum TargetRef {
    Class(usize),
    Binary(f64),
}

impl Targets<'_> {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(v) => v.len(),
            Targets::Binary(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn at(&self, i: usize) -> TargetRef {
        match self {
            Targets::Classes(v) => TargetRef::Class(v[i]),
            Targets::Binary(v) => TargetRef::Binary(v[i]),
        }
    }

    fn validate(&self, net: &Network) -> Result<()> {
        match self {
            Targets::Classes(labels) => {
                if net.layers.last().expect("validated").activation != Activation::Softmax {
                    return Err(Error::InvalidNetwork(
                        "class targets require a softmax output layer".to_string(),
                    ));
                }
                let classes = net.output_dim();
                for (row, &y) in labels.iter().enumerate() {
                    if y >= classes {
                        return Err(Error::LabelOutOfRange {
                            row,
                            label: y,
                            class_count: classes,
                        });
                    }
                }
            }
            Targets::Binary(values) => {
                let last = net.layers.last().expect("validated");
                if last.activation != Activation::Sigmoid || net.output_dim() != 1 {
                    return Err(Error::InvalidNetwork(
                        "binary targets require a single sigmoid output".to_string(),
                    ));
                }
                for (row, &v) in values.iter().enumerate() {
                    if v != 0.0 && v != 1.0 {
                        return Err(Error::InvalidTarget(format!(
                            "binary target at row {row} must be 0 or 1, got {v}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Owned counterpart of [`Targets`] for code that must gather minibatches.
#[derive(Debug, Clone)]
pub enum OwnedTargets {
    Classes(Vec<usize>),
    Binary(Vec<f64>),
}

impl OwnedTargets {
    pub fn as_targets(&self) -> Targets<'_> {
        match self {
            OwnedTargets::Classes(v) => Targets::Classes(v),
            OwnedTargets::Binary(v) => Targets::Binary(v),
        }
    }

    fn gather(targets: &Targets<'_>, idx: &[usize]) -> OwnedTargets {
        match targets {
            Targets::Classes(v) => {
                OwnedTargets::Classes(idx.iter().map(|&i| v[i]).collect())
            }
            Targets::Binary(v) => OwnedTargets::Binary(idx.iter().map(|&i| v[i]).collect()),
        }
    }
}

/// Parameter gradients, shaped exactly like the network.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

#[derive(Debug, Clone)]
pub struct LayerGrad {
    pub weights: Matrix,
    pub biases: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: Matrix::zeros(l.output_dim(), l.input_dim()),
                    biases: vec![0.0; l.output_dim()],
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.add_assign(&b.weights);
            for (x, y) in a.biases.iter_mut().zip(&b.biases) {
                *x += *y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weights.scale(s);
            for b in &mut l.biases {
                *b *= s;
            }
        }
    }

    /// Same flat ordering as [`Network::get_param`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weights.data());
            out.extend_from_slice(&l.biases);
        }
        out
    }

    fn matches(&self, net: &Network) -> bool {
        self.layers.len() == net.layers.len()
            && self.layers.iter().zip(&net.layers).all(|(g, l)| {
                g.weights.rows() == l.output_dim()
                    && g.weights.cols() == l.input_dim()
                    && g.biases.len() == l.output_dim()
            })
    }
}

fn validate_batch(net: &Network, inputs: &[Vec<f64>], targets: &Targets) -> Result<()> {
    net.validate()?;
    if inputs.is_empty() {
        return Err(Error::NoSamples);
    }
    if targets.len() != inputs.len() {
        return Err(Error::MisalignedLengths {
            left: inputs.len(),
            right: targets.len(),
        });
    }
    for x in inputs {
        if x.len() != net.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: net.input_dim(),
                got: x.len(),
            });
        }
    }
    targets.validate(net)
}

fn sample_loss_and_delta(out: &[f64], target: &TargetRef) -> (f64, Vec<f64>) {
    match *target {
        TargetRef::Class(y) => {
            let loss = -out[y].max(LOG_FLOOR).ln();
            let mut delta = out.to_vec();
            delta[y] -= 1.0;
            (loss, delta)
        }
        TargetRef::Binary(y) => {
            let p = out[0];
            let pc = p.clamp(LOG_FLOOR, 1.0 - LOG_FLOOR);
            let loss = -(y * pc.ln() + (1.0 - y) * (1.0 - pc).ln());
            (loss, vec![p - y])
        }
    }
}

/// Backpropagates one sample into `acc`; returns the sample loss.
/// The output delta is the fused loss-through-activation gradient
/// (softmax + cross-entropy, or sigmoid + binary cross-entropy), so it is
/// already d(loss)/d(final preactivation).
fn backprop_into(net: &Network, x: &[f64], target: TargetRef, acc: &mut Gradients) -> f64 {
    let trace = net.forward_trace(x).expect("dims validated by caller");
    let out = trace.activations.last().expect("non-empty");
    let (loss, mut delta) = sample_loss_and_delta(out, &target);

    for l in (0..net.layers.len()).rev() {
        let prev_act = &trace.activations[l];
        let lg = &mut acc.layers[l];
        let in_dim = prev_act.len();
        for (i, &di) in delta.iter().enumerate() {
            lg.biases[i] += di;
            let row = &mut lg.weights.data_mut()[i * in_dim..(i + 1) * in_dim];
            for (w, &a) in row.iter_mut().zip(prev_act) {
                *w += di * a;
            }
        }
        if l > 0 {
            let layer = &net.layers[l];
            let mut next = vec![0.0; in_dim];
            for (i, &di) in delta.iter().enumerate() {
                for (n, &w) in next.iter_mut().zip(layer.weights.row(i)) {
                    *n += w * di;
                }
            }
            let act = net.layers[l - 1].activation;
            for (j, n) in next.iter_mut().enumerate() {
                *n *= act.derivative(trace.preactivations[l - 1][j], prev_act[j]);
            }
            delta = next;
        }
    }
    loss
}

/// Mean batch loss and mean parameter gradients. The accumulation is
/// chunked in a fixed order, so results are bit-identical regardless of
/// the `parallel` feature or thread count.
pub fn loss_and_gradients(
    net: &Network,
    inputs: &[Vec<f64>],
    targets: &Targets,
) -> Result<(f64, Gradients)> {
    validate_batch(net, inputs, targets)?;
    let idx: Vec<usize> = (0..inputs.len()).collect();
    let (loss_sum, mut grads) = exec::chunked_map_reduce(
        &idx,
        |chunk| {
            let mut acc = Gradients::zeros_like(net);
            let mut loss = 0.0;
            for &i in chunk {
                loss += backprop_into(net, &inputs[i], targets.at(i), &mut acc);
            }
            (loss, acc)
        },
        |mut a, b| {
            a.0 += b.0;
            a.1.add_assign(&b.1);
            a
        },
    )
    .expect("non-empty checked above");
    let n = inputs.len() as f64;
    grads.scale(1.0 / n);
    Ok((loss_sum / n, grads))
}

/// Mean batch loss only (no gradients).
pub fn batch_loss(net: &Network, inputs: &[Vec<f64>], targets: &Targets) -> Result<f64> {
    validate_batch(net, inputs, targets)?;
    let idx: Vec<usize> = (0..inputs.len()).collect();
    let sum = exec::chunked_map_reduce(
        &idx,
        |chunk| {
            let mut loss = 0.0;
            for &i in chunk {
                let out = net.forward(&inputs[i]).expect("dims validated");
                loss += sample_loss_and_delta(&out, &targets.at(i)).0;
            }
            loss
        },
        |a, b| a + b,
    )
    .expect("non-empty checked above");
    Ok(sum / inputs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-2,
            epochs: 50,
            batch_size: 32,
            seed: 0,
            optimizer: OptimizerKind::Adam,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidParameter("epochs must be >= 1".to_string()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter(
                "batch_size must be >= 1".to_string(),
            ));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidParameter(format!(
                    "{name} {b} must be in [0, 1)"
                )));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter(
                "epsilon must be positive".to_string(),
            ));
        }
        Ok(())
    }
}

/// Adam moment buffers (unused under SGD). One step counter for the
/// whole network.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    step: u64,
    m: Vec<LayerGrad>,
    v: Vec<LayerGrad>,
}

impl OptimizerState {
    pub fn new(net: &Network, config: &TrainConfig) -> Self {
        let buffers = || match config.optimizer {
            OptimizerKind::Sgd => Vec::new(),
            OptimizerKind::Adam => Gradients::zeros_like(net).layers,
        };
        OptimizerState {
            step: 0,
            m: buffers(),
            v: buffers(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One parameter update in place: plain SGD, or Adam with bias-corrected
/// first and second moments.
pub fn optimizer_step(
    net: &mut Network,
    grads: &Gradients,
    config: &TrainConfig,
    state: &mut OptimizerState,
) -> Result<()> {
    config.validate()?;
    if !grads.matches(net) {
        return Err(Error::DimensionMismatch {
            expected: net.param_count(),
            got: grads.layers.iter().map(|l| l.weights.data().len() + l.biases.len()).sum(),
        });
    }
    let lr = config.learning_rate;
    match config.optimizer {
        OptimizerKind::Sgd => {
            for (layer, g) in net.layers.iter_mut().zip(&grads.layers) {
                for (w, gw) in layer.weights.data_mut().iter_mut().zip(g.weights.data()) {
                    *w -= lr * gw;
                }
                for (b, gb) in layer.biases.iter_mut().zip(&g.biases) {
                    *b -= lr * gb;
                }
            }
        }
        OptimizerKind::Adam => {
            if state.m.len() != net.layers.len() {
                return Err(Error::InvalidParameter(
                    "optimizer state does not match network".to_string(),
                ));
            }
            state.step += 1;
            let t = state.step as i32;
            let bc1 = 1.0 - config.beta1.powi(t);
            let bc2 = 1.0 - config.beta2.powi(t);
            let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                *m = config.beta1 * *m + (1.0 - config.beta1) * g;
                *v = config.beta2 * *v + (1.0 - config.beta2) * g * g;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *p -= lr * mhat / (vhat.sqrt() + config.epsilon);
            };
            for (((layer, g), m), v) in net
                .layers
                .iter_mut()
                .zip(&grads.layers)
                .zip(&mut state.m)
                .zip(&mut state.v)
            {
                for (((w, &gw), mw), vw) in layer
                    .weights
                    .data_mut()
                    .iter_mut()
                    .zip(g.weights.data())
                    .zip(m.weights.data_mut())
                    .zip(v.weights.data_mut())
                {
                    update(w, gw, mw, vw);
                }
                for (((b, &gb), mb), vb) in layer
                    .biases
                    .iter_mut()
                    .zip(&g.biases)
                    .zip(&mut m.biases)
                    .zip(&mut v.biases)
                {
                    update(b, gb, mb, vb);
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainStats {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub epoch_losses: Vec<f64>,
}

/// Shuffled minibatch training. The shuffle order comes from a dedicated
/// RNG substream of `config.seed`, the final partial batch is kept, and
/// `batch_size` is clamped to the dataset size.
pub fn train_supervised(
    net: &mut Network,
    inputs: &[Vec<f64>],
    targets: &Targets,
    config: &TrainConfig,
) -> Result<TrainStats> {
    config.validate()?;
    validate_batch(net, inputs, targets)?;
    let initial_loss = batch_loss(net, inputs, targets)?;
    let mut state = OptimizerState::new(net, config);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut shuffle_rng = rng::substream(config.seed, "minibatch-shuffle");
    let bs = config.batch_size.min(inputs.len());
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(bs) {
            let bx: Vec<Vec<f64>> = chunk.iter().map(|&i| inputs[i].clone()).collect();
            let bt = OwnedTargets::gather(targets, chunk);
            let (loss, grads) = loss_and_gradients(net, &bx, &bt.as_targets())?;
            optimizer_step(net, &grads, config, &mut state)?;
            loss_sum += loss;
            batches += 1;
        }
        epoch_losses.push(loss_sum / batches as f64);
    }
    let final_loss = batch_loss(net, inputs, targets)?;
    Ok(TrainStats {
        initial_loss,
        final_loss,
        epoch_losses,
    })
}

/// Index of the largest value; first occurrence wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &x) in v.iter().enumerate() {
        if x > best_v {
            best = i;
            best_v = x;
        }
    }
    best
}

/// Fraction of samples whose argmax prediction matches the label.
pub fn classification_accuracy(
    net: &Network,
    inputs: &[Vec<f64>],
    labels: &[usize],
) -> Result<f64> {
    if inputs.is_empty() {
        return Err(Error::NoSamples);
    }
    if inputs.len() != labels.len() {
        return Err(Error::MisalignedLengths {
            left: inputs.len(),
            right: labels.len(),
        });
    }
    let outs = net.forward_batch(inputs)?;
    let hits = outs
        .iter()
        .zip(labels)
        .filter(|(o, &y)| argmax(o) == y)
        .count();
    Ok(hits as f64 / inputs.len() as f64)
}
