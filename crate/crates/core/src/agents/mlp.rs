//! Fully connected network with rectifier hidden layers and a linear output.
//!
//! All parameters live in one flat vector. Layer `l` stores its weights as an
//! `outputs x inputs` row-major block followed by `outputs` biases.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::AgentError;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Per-layer outputs of a batched forward pass, kept for backpropagation.
/// `outputs[0]` is the input batch; hidden entries are post-rectifier.
#[derive(Debug, Clone)]
pub struct Activations {
    pub batch: usize,
    pub outputs: Vec<Vec<f64>>,
}

impl Activations {
    pub fn last(&self) -> &[f64] {
        self.outputs.last().expect("at least the input layer")
    }
}

impl Mlp {
    /// Zero-initialised network with layer widths `sizes` (input first).
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "a network needs input and output sizes");
        let count = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Self { sizes: sizes.to_vec(), params: vec![0.0; count] }
    }

    /// Fan-in scaled uniform weights `U(-1/sqrt(n_in), 1/sqrt(n_in))`, zero biases.
    pub fn new<R: Rng>(sizes: &[usize], rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes);
        for l in 0..net.layer_count() {
            let (n_in, n_out) = (net.sizes[l], net.sizes[l + 1]);
            let bound = 1.0 / (n_in as f64).sqrt();
            let start = net.layer_offset(l);
            for w in &mut net.params[start..start + n_in * n_out] {
                *w = rng.random_range(-bound..bound);
            }
        }
        net
    }

    pub fn from_parts(sizes: &[usize], params: Vec<f64>) -> Result<Self, AgentError> {
        let net = Self::zeros(sizes);
        if params.len() != net.params.len() {
            return Err(AgentError::Shape { what: "parameter vector", expected: net.params.len(), got: params.len() });
        }
        Ok(Self { sizes: sizes.to_vec(), params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_len(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_len(&self) -> usize {
        *self.sizes.last().expect("non-empty")
    }

    pub fn layer_count(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layer_offset(&self, layer: usize) -> usize {
        self.sizes.windows(2).take(layer).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// `(weights, bias)` of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let start = self.layer_offset(l);
        let (w, rest) = self.params[start..].split_at(n_in * n_out);
        (w, &rest[..n_out])
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, AgentError> {
        Ok(self.forward_batch(input, 1)?.outputs.pop().expect("output layer"))
    }

    /// Forward pass over `batch` row-major inputs.
    pub fn forward_batch(&self, input: &[f64], batch: usize) -> Result<Activations, AgentError> {
        if input.len() != batch * self.input_len() {
            return Err(AgentError::Shape {
                what: "input batch",
                expected: batch * self.input_len(),
                got: input.len(),
            });
        }
        let mut outputs = Vec::with_capacity(self.sizes.len());
        outputs.push(input.to_vec());
        for l in 0..self.layer_count() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w, bias) = self.layer(l);
            let hidden = l + 1 < self.layer_count();
            let prev = outputs.last().expect("previous layer");
            let mut out = vec![0.0; batch * n_out];
            for (x, y) in prev.chunks_exact(n_in).zip(out.chunks_exact_mut(n_out)) {
                for ((yj, row), bj) in y.iter_mut().zip(w.chunks_exact(n_in)).zip(bias) {
                    let z = bj + dot(row, x);
                    *yj = if hidden { z.max(0.0) } else { z };
                }
            }
            outputs.push(out);
        }
        Ok(Activations { batch, outputs })
    }

    /// Accumulates into `grad` the parameter gradient of a scalar loss whose
    /// gradient with respect to the network outputs is `grad_out`.
    pub fn backward(&self, acts: &Activations, grad_out: &[f64], grad: &mut [f64]) {
        assert_eq!(grad.len(), self.params.len());
        assert_eq!(grad_out.len(), acts.batch * self.output_len());
        let mut delta = grad_out.to_vec();
        for l in (0..self.layer_count()).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let start = self.layer_offset(l);
            let (w, _) = self.layer(l);
            let input = &acts.outputs[l];
            {
                let (gw, rest) = grad[start..].split_at_mut(n_in * n_out);
                let gb = &mut rest[..n_out];
                for (x, d) in input.chunks_exact(n_in).zip(delta.chunks_exact(n_out)) {
                    for ((gw_row, gbj), &dj) in gw.chunks_exact_mut(n_in).zip(gb.iter_mut()).zip(d) {
                        if dj != 0.0 {
                            axpy(dj, x, gw_row);
                            *gbj += dj;
                        }
                    }
                }
            }
            if l == 0 {
                break;
            }
            let mut prev_delta = vec![0.0; acts.batch * n_in];
            for ((pd, d), x) in
                prev_delta.chunks_exact_mut(n_in).zip(delta.chunks_exact(n_out)).zip(input.chunks_exact(n_in))
            {
                for (&dj, row) in d.iter().zip(w.chunks_exact(n_in)) {
                    if dj != 0.0 {
                        axpy(dj, row, pd);
                    }
                }
                // Rectifier derivative: the input of this layer is the previous
                // layer's post-activation output.
                for (p, &xi) in pd.iter_mut().zip(x) {
                    if xi <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev_delta;
        }
    }

    /// Order-sensitive digest of the parameters.
    pub fn digest(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.sizes.hash(&mut h);
        for p in &self.params {
            p.to_bits().hash(&mut h);
        }
        h.finish()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            activation: "relu".to_string(),
            layers: (0..self.layer_count())
                .map(|l| {
                    let (w, b) = self.layer(l);
                    LayerDump {
                        inputs: self.sizes[l],
                        outputs: self.sizes[l + 1],
                        weights: w.to_vec(),
                        bias: b.to_vec(),
                    }
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, AgentError> {
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(AgentError::Checkpoint(format!("unsupported format {} v{}", ck.format, ck.version)));
        }
        if ck.layers.is_empty() {
            return Err(AgentError::Checkpoint("no layers".into()));
        }
        let mut sizes = vec![ck.layers[0].inputs];
        let mut params = Vec::new();
        for (i, layer) in ck.layers.iter().enumerate() {
            if layer.inputs != *sizes.last().expect("non-empty") {
                return Err(AgentError::Checkpoint(format!("layer {i} input size does not chain")));
            }
            if layer.weights.len() != layer.inputs * layer.outputs || layer.bias.len() != layer.outputs {
                return Err(AgentError::Checkpoint(format!("layer {i} has inconsistent shapes")));
            }
            sizes.push(layer.outputs);
            params.extend_from_slice(&layer.weights);
            params.extend_from_slice(&layer.bias);
        }
        Self::from_parts(&sizes, params)
    }

    pub fn save_json(&self) -> String {
        serde_json::to_string(&self.to_checkpoint()).expect("checkpoint serializes")
    }

    pub fn load_json(text: &str) -> Result<Self, AgentError> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| AgentError::Checkpoint(e.to_string()))?;
        Self::from_checkpoint(&ck)
    }
}

pub const CHECKPOINT_FORMAT: &str = "cross-mlp";
pub const CHECKPOINT_VERSION: u32 = 1;

/// JSON model file: layer shapes plus row-major weights and biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub activation: String,
    pub layers: Vec<LayerDump>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerDump {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators let the compiler vectorise the reduction.
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|l| l - log_sum).collect()
}
