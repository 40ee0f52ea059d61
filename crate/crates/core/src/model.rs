//! Small differentiable classifiers used as client models.
//!
//! A model is a stack of dense layers: `tanh` between hidden layers and a
//! softmax head trained with mean cross-entropy. Parameters live in one flat
//! [`ParamVector`]; each layer stores its `out x in` weights row-major
//! followed by its `out` biases, so the final layer is always the tail slice.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture of a client model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_dim: usize,
    pub num_classes: usize,
    #[serde(default)]
    pub hidden_dims: Vec<usize>,
}

impl ModelSpec {
    pub fn linear(input_dim: usize, num_classes: usize) -> Self {
        Self { input_dim, num_classes, hidden_dims: Vec::new() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidConfig("model.input_dim must be >= 1".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig("model.num_classes must be >= 2".into()));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::InvalidConfig("model.hidden_dims entries must be >= 1".into()));
        }
        Ok(())
    }

    /// Layer widths from input to output.
    fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden_dims.len() + 2);
        w.push(self.input_dim);
        w.extend_from_slice(&self.hidden_dims);
        w.push(self.num_classes);
        w
    }

    /// `(offset, fan_in, fan_out)` of each layer inside the flat vector.
    fn layers(&self) -> Vec<(usize, usize, usize)> {
        let widths = self.widths();
        let mut offset = 0;
        widths
            .windows(2)
            .map(|w| {
                let layer = (offset, w[0], w[1]);
                offset += w[0] * w[1] + w[1];
                layer
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.widths().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Number of parameters in the output layer.
    pub fn last_layer_len(&self) -> usize {
        let w = self.widths();
        let fan_in = w[w.len() - 2];
        fan_in * self.num_classes + self.num_classes
    }
}

/// Flat parameter vector of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn check(&self, spec: &ModelSpec) -> Result<()> {
        let expected = spec.param_count();
        if self.0.len() != expected {
            return Err(Error::ParamLength { expected, actual: self.0.len() });
        }
        Ok(())
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Row-major feature matrix with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub dim: usize,
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
}

impl LabeledDataset {
    pub fn new(dim: usize, features: Vec<f64>, labels: Vec<usize>) -> Self {
        debug_assert_eq!(features.len(), dim * labels.len());
        Self { dim, features, labels }
    }

    pub fn empty(dim: usize) -> Self {
        Self { dim, features: Vec::new(), labels: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn push(&mut self, row: &[f64], label: usize) {
        debug_assert_eq!(row.len(), self.dim);
        self.features.extend_from_slice(row);
        self.labels.push(label);
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        let mut out = Self::empty(self.dim);
        out.features.reserve(idx.len() * self.dim);
        out.labels.reserve(idx.len());
        for &i in idx {
            out.push(self.row(i), self.labels[i]);
        }
        out
    }

    /// Appends all rows of `other`.
    pub fn extend(&mut self, other: &LabeledDataset) {
        self.features.extend_from_slice(&other.features);
        self.labels.extend_from_slice(&other.labels);
    }

    pub fn label_counts(&self, num_classes: usize) -> Vec<usize> {
        let mut counts = vec![0; num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// Momentum SGD settings for one local update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdConfig {
    #[serde(default = "SgdConfig::default_lr")]
    pub learning_rate: f64,
    #[serde(default = "SgdConfig::default_momentum")]
    pub momentum: f64,
    #[serde(default = "SgdConfig::default_batch")]
    pub batch_size: usize,
    #[serde(default = "SgdConfig::default_steps")]
    pub local_steps: usize,
}

impl SgdConfig {
    fn default_lr() -> f64 {
        0.005
    }
    fn default_momentum() -> f64 {
        0.9
    }
    fn default_batch() -> usize {
        32
    }
    fn default_steps() -> usize {
        10
    }

    pub fn validate(&self) -> Result<()> {
        // lr = 0 is accepted so a round can be made a no-op.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("sgd.learning_rate must be finite and >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig("sgd.momentum must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("sgd.batch_size must be >= 1".into()));
        }
        if self.local_steps == 0 {
            return Err(Error::InvalidConfig("sgd.local_steps must be >= 1".into()));
        }
        Ok(())
    }
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: Self::default_lr(),
            momentum: Self::default_momentum(),
            batch_size: Self::default_batch(),
            local_steps: Self::default_steps(),
        }
    }
}

/// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` initialisation of every layer.
pub fn init_params<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> ParamVector {
    let mut values = vec![0.0; spec.param_count()];
    for (offset, fan_in, fan_out) in spec.layers() {
        let bound = 1.0 / (fan_in as f64).sqrt();
        for v in &mut values[offset..offset + fan_in * fan_out + fan_out] {
            *v = rng.random_range(-bound..=bound);
        }
    }
    ParamVector(values)
}

/// Forward pass for one sample. Returns post-activation values of every
/// layer (index 0 is the input) and the output logits.
fn forward(params: &[f64], layers: &[(usize, usize, usize)], x: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(layers.len());
    let mut current = x.to_vec();
    for (li, &(offset, fan_in, fan_out)) in layers.iter().enumerate() {
        let w = &params[offset..offset + fan_in * fan_out];
        let b = &params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
        let mut out: Vec<f64> = b.to_vec();
        for (o, slot) in out.iter_mut().enumerate() {
            let row = &w[o * fan_in..(o + 1) * fan_in];
            *slot += row.iter().zip(&current).map(|(a, b)| a * b).sum::<f64>();
        }
        if li + 1 < layers.len() {
            out.iter_mut().for_each(|v| *v = v.tanh());
        }
        acts.push(std::mem::replace(&mut current, out));
    }
    (acts, current)
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// Mean cross-entropy of the model on `data`.
pub fn loss(params: &ParamVector, data: &LabeledDataset, spec: &ModelSpec) -> Result<f64> {
    params.check(spec)?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let layers = spec.layers();
    let total: f64 = (0..data.len())
        .map(|i| {
            let (_, logits) = forward(&params.0, &layers, data.row(i));
            -log_softmax(&logits)[data.labels[i]]
        })
        .sum();
    Ok((total / data.len() as f64).max(0.0))
}

/// Accumulates the cross-entropy gradient of the rows in `idx` into `grad`.
fn accumulate_gradient(
    params: &[f64],
    layers: &[(usize, usize, usize)],
    data: &LabeledDataset,
    idx: impl Iterator<Item = usize>,
    grad: &mut [f64],
) -> usize {
    let mut count = 0;
    for i in idx {
        count += 1;
        let (acts, logits) = forward(params, layers, data.row(i));
        let mut delta: Vec<f64> = log_softmax(&logits).into_iter().map(f64::exp).collect();
        delta[data.labels[i]] -= 1.0;
        for li in (0..layers.len()).rev() {
            let (offset, fan_in, fan_out) = layers[li];
            let input = &acts[li];
            for o in 0..fan_out {
                let g = delta[o];
                if g != 0.0 {
                    let row = &mut grad[offset + o * fan_in..offset + (o + 1) * fan_in];
                    row.iter_mut().zip(input).for_each(|(r, a)| *r += g * a);
                }
                grad[offset + fan_in * fan_out + o] += g;
            }
            if li > 0 {
                // Backpropagate through the weights, then through tanh.
                let w = &params[offset..offset + fan_in * fan_out];
                let mut prev = vec![0.0; fan_in];
                for (o, &g) in delta.iter().enumerate() {
                    let row = &w[o * fan_in..(o + 1) * fan_in];
                    prev.iter_mut().zip(row).for_each(|(p, wv)| *p += g * wv);
                }
                prev.iter_mut().zip(input).for_each(|(p, a)| *p *= 1.0 - a * a);
                delta = prev;
            }
        }
    }
    count
}

/// Exact gradient of [`loss`].
pub fn loss_gradient(params: &ParamVector, data: &LabeledDataset, spec: &ModelSpec) -> Result<ParamVector> {
    params.check(spec)?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let layers = spec.layers();
    let mut grad = vec![0.0; params.len()];
    let n = accumulate_gradient(&params.0, &layers, data, 0..data.len(), &mut grad);
    let scale = 1.0 / n as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok(ParamVector(grad))
}

/// Runs `cfg.local_steps` momentum-SGD steps starting from `params0`.
///
/// Minibatches walk one random permutation of the client's samples,
/// wrapping around when the steps need more than one pass. The momentum
/// buffer starts at zero on every call.
pub fn local_update<R: Rng + ?Sized>(
    params0: &ParamVector,
    data: &LabeledDataset,
    cfg: &SgdConfig,
    spec: &ModelSpec,
    rng: &mut R,
) -> Result<ParamVector> {
    params0.check(spec)?;
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let layers = spec.layers();
    let n = data.len();
    let batch = cfg.batch_size.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);

    let mut params = params0.0.clone();
    let mut velocity = vec![0.0; params.len()];
    let mut grad = vec![0.0; params.len()];
    let mut cursor = 0;
    for _ in 0..cfg.local_steps {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let idx = (0..batch).map(|k| order[(cursor + k) % n]);
        let count = accumulate_gradient(&params, &layers, data, idx, &mut grad);
        cursor = (cursor + batch) % n;
        let scale = 1.0 / count as f64;
        for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
            *v = cfg.momentum * *v + g * scale;
            *p -= cfg.learning_rate * *v;
        }
    }
    Ok(ParamVector(params))
}

/// Output-layer weights and biases, used as the client's clustering
/// representation.
pub fn representation(params: &ParamVector, spec: &ModelSpec) -> Result<ParamVector> {
    params.check(spec)?;
    let tail = spec.last_layer_len();
    Ok(ParamVector(params.0[params.len() - tail..].to_vec()))
}

/// Arg-max class prediction for every row.
pub fn predict(params: &ParamVector, data: &LabeledDataset, spec: &ModelSpec) -> Result<Vec<usize>> {
    params.check(spec)?;
    let layers = spec.layers();
    Ok((0..data.len())
        .map(|i| {
            let (_, logits) = forward(&params.0, &layers, data.row(i));
            logits
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (c, &z)| if z > best.1 { (c, z) } else { best })
                .0
        })
        .collect())
}
