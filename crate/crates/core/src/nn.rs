//! Dense ReLU networks with hand-written reverse mode and Adam.
//!
//! Hidden layers use ReLU, the output layer is linear. Weight matrices are
//! stored row-major with shape `outputs × inputs`.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::{all_finite, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs × inputs`.
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![T::zero(); inputs * outputs],
            bias: vec![T::zero(); outputs],
        }
    }

    #[inline]
    fn apply(&self, input: &[T], out: &mut Vec<T>) {
        out.clear();
        for (row, &b) in self.weights.chunks_exact(self.inputs).zip(&self.bias) {
            let mut acc = b;
            for (&w, &x) in row.iter().zip(input) {
                acc = acc + w * x;
            }
            out.push(acc);
        }
    }
}

/// Feed-forward network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    layers: Vec<Dense<T>>,
}

fn check_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::invalid(format!(
            "layer_sizes needs at least input and output entries, got {layer_sizes:?}"
        )));
    }
    if layer_sizes.iter().any(|&s| s == 0) {
        return Err(Error::invalid(format!("zero-width layer in {layer_sizes:?}")));
    }
    Ok(())
}

impl<T: Scalar> Mlp<T> {
    /// Uniform fan-in initialisation, `U(-√(6/fan_in), √(6/fan_in))`, zero biases.
    pub fn new(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let mut rng = rng::stream(seed, rng::Purpose::Init, 0);
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / fan_in as f64).sqrt();
                let mut layer = Dense::zeros(fan_in, fan_out);
                for v in &mut layer.weights {
                    *v = T::of(rng.gen_range(-bound..bound));
                }
                layer
            })
            .collect();
        Ok(Mlp { layers })
    }

    /// All-zero parameters.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        check_sizes(layer_sizes)?;
        Ok(Mlp {
            layers: layer_sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        })
    }

    pub fn from_layers(layers: Vec<Dense<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("network needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::invalid(format!("layer {i} has inconsistent shapes")));
            }
            if i > 0 && layers[i - 1].outputs != l.inputs {
                return Err(Error::invalid(format!("layer {i} input does not match layer {}", i - 1)));
            }
        }
        Ok(Mlp { layers })
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense<T>] {
        &mut self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].inputs];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Multiplies the output layer weights by `factor`.
    pub fn scale_output_layer(&mut self, factor: T) {
        let last = self.layers.len() - 1;
        for w in &mut self.layers[last].weights {
            *w = *w * factor;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| all_finite(&l.weights) && all_finite(&l.bias))
    }

    fn check_input(&self, input: &[T]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::invalid(format!(
                "network expects input of length {}, got {}",
                self.input_dim(),
                input.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        self.check_input(input)?;
        let mut trace = Trace::default();
        self.forward_into(input, &mut trace);
        Ok(trace.output().to_vec())
    }

    /// Forward pass keeping every layer activation. Input length is not checked.
    pub fn forward_into(&self, input: &[T], trace: &mut Trace<T>) {
        let depth = self.layers.len();
        trace.acts.resize_with(depth + 1, Vec::new);
        trace.acts[0].clear();
        trace.acts[0].extend_from_slice(input);
        for (i, layer) in self.layers.iter().enumerate() {
            let (head, tail) = trace.acts.split_at_mut(i + 1);
            let out = &mut tail[0];
            layer.apply(&head[i], out);
            if i + 1 < depth {
                for v in out.iter_mut() {
                    if *v <= T::zero() {
                        *v = T::zero();
                    }
                }
            }
        }
    }

    /// Gradients of `⟨upstream, forward(input)⟩` with respect to every
    /// parameter and to the input.
    pub fn backward(&self, input: &[T], upstream: &[T]) -> Result<Gradients<T>> {
        self.check_input(input)?;
        if upstream.len() != self.output_dim() {
            return Err(Error::invalid(format!(
                "upstream gradient has length {}, network output is {}",
                upstream.len(),
                self.output_dim()
            )));
        }
        let mut trace = Trace::default();
        self.forward_into(input, &mut trace);
        let mut grads = Gradients::zeros_like(self);
        let input_grad = self.backward_accumulate(&trace, upstream, &mut grads, true);
        grads.input = input_grad;
        Ok(grads)
    }

    /// Accumulates parameter gradients for one sample into `grads`, given the
    /// trace of the matching forward pass. Returns the input gradient when asked.
    pub fn backward_accumulate(
        &self,
        trace: &Trace<T>,
        upstream: &[T],
        grads: &mut Gradients<T>,
        want_input: bool,
    ) -> Option<Vec<T>> {
        let depth = self.layers.len();
        let mut delta: Vec<T> = upstream.to_vec();
        let mut next: Vec<T> = Vec::new();
        for i in (0..depth).rev() {
            let layer = &self.layers[i];
            if i + 1 < depth {
                // ReLU gate; derivative at 0 is taken as 0.
                for (d, &a) in delta.iter_mut().zip(&trace.acts[i + 1]) {
                    if a <= T::zero() {
                        *d = T::zero();
                    }
                }
            }
            let prev = &trace.acts[i];
            let gw = &mut grads.weights[i];
            let gb = &mut grads.biases[i];
            for (o, &d) in delta.iter().enumerate() {
                if d == T::zero() {
                    continue;
                }
                gb[o] = gb[o] + d;
                let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                for (g, &x) in row.iter_mut().zip(prev) {
                    *g = *g + d * x;
                }
            }
            if i == 0 && !want_input {
                return None;
            }
            next.clear();
            next.resize(layer.inputs, T::zero());
            for (o, &d) in delta.iter().enumerate() {
                if d == T::zero() {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (n, &w) in next.iter_mut().zip(row) {
                    *n = *n + d * w;
                }
            }
            std::mem::swap(&mut delta, &mut next);
        }
        Some(delta)
    }
}

/// Per-layer activations of one forward pass (`acts[0]` is the input).
#[derive(Debug, Clone)]
pub struct Trace<T> {
    acts: Vec<Vec<T>>,
}

impl<T> Default for Trace<T> {
    fn default() -> Self {
        Trace { acts: Vec::new() }
    }
}

impl<T> Trace<T> {
    pub fn output(&self) -> &[T] {
        &self.acts[self.acts.len() - 1]
    }
}

/// Gradients congruent with an [`Mlp`], plus an optional input gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub weights: Vec<Vec<T>>,
    pub biases: Vec<Vec<T>>,
    pub input: Option<Vec<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(net: &Mlp<T>) -> Self {
        Gradients {
            weights: net.layers.iter().map(|l| vec![T::zero(); l.weights.len()]).collect(),
            biases: net.layers.iter().map(|l| vec![T::zero(); l.bias.len()]).collect(),
            input: None,
        }
    }

    pub fn matches(&self, net: &Mlp<T>) -> bool {
        self.weights.len() == net.layers.len()
            && self.biases.len() == net.layers.len()
            && net
                .layers
                .iter()
                .zip(self.weights.iter().zip(&self.biases))
                .all(|(l, (w, b))| l.weights.len() == w.len() && l.bias.len() == b.len())
    }

    fn values(&self) -> impl Iterator<Item = &T> {
        self.weights.iter().flatten().chain(self.biases.iter().flatten())
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.weights
            .iter_mut()
            .flatten()
            .chain(self.biases.iter_mut().flatten())
    }

    pub fn scale(&mut self, factor: T) {
        for v in self.values_mut() {
            *v = *v * factor;
        }
    }

    pub fn add_assign(&mut self, other: &Gradients<T>) {
        for (a, b) in self.values_mut().zip(other.values()) {
            *a = *a + *b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.values().all(|v| *v == T::zero())
    }

    pub fn l2_norm(&self) -> T {
        self.values().fold(T::zero(), |acc, &v| acc + v * v).sqrt()
    }
}

/// Adam hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Decoupled decay applied to weight matrices only.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Adam moment accumulators for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub config: AdamConfig,
    pub step: u64,
    first: Gradients<T>,
    second: Gradients<T>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(net: &Mlp<T>, config: AdamConfig) -> Self {
        OptimizerState {
            config,
            step: 0,
            first: Gradients::zeros_like(net),
            second: Gradients::zeros_like(net),
        }
    }

    /// In-place bias-corrected Adam update. On error nothing is modified.
    pub fn apply(&mut self, net: &mut Mlp<T>, grads: &Gradients<T>) -> Result<()> {
        if !grads.matches(net) || !self.first.matches(net) {
            return Err(Error::invalid("gradient or optimizer shape does not match network"));
        }
        if !grads.is_finite() {
            return Err(Error::numeric("non-finite gradient entry"));
        }
        self.step += 1;
        let c = self.config;
        let lr = T::of(c.learning_rate);
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let eps = T::of(c.epsilon);
        let bc1 = T::one() - b1.powi(self.step as i32);
        let bc2 = T::one() - b2.powi(self.step as i32);
        let decay = T::one() - lr * T::of(c.weight_decay);
        let one = T::one();

        let update = |p: &mut T, g: T, m: &mut T, v: &mut T| {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
        };

        for (l, layer) in net.layers.iter_mut().enumerate() {
            if c.weight_decay > 0.0 {
                for w in &mut layer.weights {
                    *w = *w * decay;
                }
            }
            for (k, w) in layer.weights.iter_mut().enumerate() {
                update(w, grads.weights[l][k], &mut self.first.weights[l][k], &mut self.second.weights[l][k]);
            }
            for (k, b) in layer.bias.iter_mut().enumerate() {
                update(b, grads.biases[l][k], &mut self.first.biases[l][k], &mut self.second.biases[l][k]);
            }
        }
        Ok(())
    }
}

/// Value-returning Adam step.
pub fn adam_step<T: Scalar>(
    params: &Mlp<T>,
    state: &OptimizerState<T>,
    grads: &Gradients<T>,
) -> Result<(Mlp<T>, OptimizerState<T>)> {
    let mut p = params.clone();
    let mut s = state.clone();
    s.apply(&mut p, grads)?;
    Ok((p, s))
}

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// On-disk network representation (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub layer_sizes: Vec<usize>,
    pub activation: String,
    /// One row-major `outputs × inputs` array per layer.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn from_mlp<T: Scalar>(net: &Mlp<T>, metadata: BTreeMap<String, String>) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            layer_sizes: net.layer_sizes(),
            activation: "relu-hidden/identity-output".to_string(),
            weights: net.layers.iter().map(|l| l.weights.iter().map(|v| v.f64()).collect()).collect(),
            biases: net.layers.iter().map(|l| l.bias.iter().map(|v| v.f64()).collect()).collect(),
            metadata,
        }
    }

    pub fn to_mlp<T: Scalar>(&self) -> Result<Mlp<T>> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported checkpoint format version {}",
                self.format_version
            )));
        }
        check_sizes(&self.layer_sizes)?;
        let n = self.layer_sizes.len() - 1;
        if self.weights.len() != n || self.biases.len() != n {
            return Err(Error::invalid("checkpoint layer count does not match layer_sizes"));
        }
        let layers = self
            .layer_sizes
            .windows(2)
            .zip(self.weights.iter().zip(&self.biases))
            .map(|(w, (ws, bs))| Dense {
                inputs: w[0],
                outputs: w[1],
                weights: ws.iter().map(|&v| T::of(v)).collect(),
                bias: bs.iter().map(|&v| T::of(v)).collect(),
            })
            .collect();
        Mlp::from_layers(layers)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}
