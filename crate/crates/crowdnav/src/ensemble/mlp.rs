//! Gaussian-output multilayer perceptron with hand-rolled backprop.

use crate::ensemble::{EnsembleError, GaussianPrediction};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Variance floor (normalized label units) keeping the likelihood finite.
pub const VAR_FLOOR: f64 = 1e-6;

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One fully connected layer, `y = W x + b`, weights row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Layer {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Layer { rows, cols, w: vec![0.0; rows * cols], b: vec![0.0; rows] }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        debug_assert_eq!(x.len(), self.cols);
        out.clear();
        for r in 0..self.rows {
            let row = &self.w[r * self.cols..(r + 1) * self.cols];
            let mut acc = self.b[r];
            for (w, v) in row.iter().zip(x) {
                acc += w * v;
            }
            out.push(acc);
        }
    }

    fn scale(&mut self, s: f64) {
        for w in self.w.iter_mut() {
            *w *= s;
        }
        for b in self.b.iter_mut() {
            *b *= s;
        }
    }
}

/// Per-layer parameter gradients, same shapes as the layers themselves.
pub type Gradients = Vec<Layer>;

/// One ensemble member: a ReLU MLP whose two-unit head parameterizes a
/// Gaussian via an identity mean and a softplus-plus-floor variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpMember {
    /// Full width chain including the input and the 2-unit head.
    pub widths: Vec<usize>,
    pub layers: Vec<Layer>,
    pub init_seed: u64,
}

/// Reusable forward/backward buffers.
#[derive(Debug, Clone)]
pub struct Scratch {
    /// activations[0] is the input; activations[i+1] the output of layer i
    /// after its nonlinearity.
    activations: Vec<Vec<f64>>,
    /// Pre-activation values per layer.
    pre: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl MlpMember {
    /// He-initialized member. `hidden` lists the hidden widths; the full
    /// chain becomes `input -> hidden... -> 2`.
    pub fn init(input_dim: usize, hidden: &[usize], seed: u64) -> Self {
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(input_dim);
        widths.extend_from_slice(hidden);
        widths.push(2);
        let mut rng = crate::seeds::rng(seed, "mlp-init", 0);
        let layers = widths
            .windows(2)
            .map(|pair| {
                let (cols, rows) = (pair[0], pair[1]);
                let scale = (2.0 / cols as f64).sqrt();
                let w = (0..rows * cols)
                    .map(|_| {
                        let z: f64 = rng.sample(StandardNormal);
                        z * scale
                    })
                    .collect();
                Layer { rows, cols, w, b: vec![0.0; rows] }
            })
            .collect();
        MlpMember { widths, layers, init_seed: seed }
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn scratch(&self) -> Scratch {
        Scratch {
            activations: self.widths.iter().map(|w| Vec::with_capacity(*w)).collect(),
            pre: self.widths[1..].iter().map(|w| Vec::with_capacity(*w)).collect(),
            delta: Vec::new(),
            delta_prev: Vec::new(),
        }
    }

    pub fn zero_gradients(&self) -> Gradients {
        self.layers.iter().map(|l| Layer::zeros(l.rows, l.cols)).collect()
    }

    /// Deterministic forward pass in normalized units.
    pub fn forward(&self, x: &[f64]) -> Result<GaussianPrediction, EnsembleError> {
        if x.len() != self.input_dim() {
            return Err(EnsembleError::DimensionMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        let mut scratch = self.scratch();
        Ok(self.forward_into(x, &mut scratch))
    }

    /// Forward pass into caller-provided buffers; input length must match.
    pub fn forward_into(&self, x: &[f64], scratch: &mut Scratch) -> GaussianPrediction {
        debug_assert_eq!(x.len(), self.input_dim());
        scratch.activations[0].clear();
        scratch.activations[0].extend_from_slice(x);
        let n_layers = self.layers.len();
        for (i, layer) in self.layers.iter().enumerate() {
            let (before, after) = scratch.activations.split_at_mut(i + 1);
            layer.apply(&before[i], &mut scratch.pre[i]);
            let act = &mut after[0];
            act.clear();
            if i + 1 < n_layers {
                act.extend(scratch.pre[i].iter().map(|z| z.max(0.0)));
            } else {
                act.extend_from_slice(&scratch.pre[i]);
            }
        }
        let head = scratch.activations.last().expect("head activation");
        GaussianPrediction { mean: head[0], variance: softplus(head[1]) + VAR_FLOOR }
    }

    /// Backpropagates the Gaussian negative log-likelihood for the sample
    /// most recently passed through `forward_into` with this scratch,
    /// accumulating parameter gradients. Returns the sample loss.
    pub fn backward_into(&self, label: f64, scratch: &mut Scratch, grads: &mut Gradients) -> f64 {
        let head = scratch.activations.last().expect("forward_into must run first");
        let mean = head[0];
        let raw_var = head[1];
        let variance = softplus(raw_var) + VAR_FLOOR;
        let loss = nll_loss(&GaussianPrediction { mean, variance }, label);

        let residual = mean - label;
        let d_mean = residual / variance;
        let d_var = 0.5 * (1.0 / variance - (residual * residual) / (variance * variance));
        scratch.delta.clear();
        scratch.delta.push(d_mean);
        scratch.delta.push(d_var * sigmoid(raw_var));

        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let grad = &mut grads[i];
            let input = &scratch.activations[i];
            for r in 0..layer.rows {
                let d = scratch.delta[r];
                grad.b[r] += d;
                let row = &mut grad.w[r * layer.cols..(r + 1) * layer.cols];
                for (g, v) in row.iter_mut().zip(input) {
                    *g += d * v;
                }
            }
            if i > 0 {
                scratch.delta_prev.clear();
                scratch.delta_prev.resize(layer.cols, 0.0);
                for r in 0..layer.rows {
                    let d = scratch.delta[r];
                    let row = &layer.w[r * layer.cols..(r + 1) * layer.cols];
                    for (acc, w) in scratch.delta_prev.iter_mut().zip(row) {
                        *acc += d * w;
                    }
                }
                // ReLU gate from the previous layer's pre-activations.
                for (acc, z) in scratch.delta_prev.iter_mut().zip(&scratch.pre[i - 1]) {
                    if *z <= 0.0 {
                        *acc = 0.0;
                    }
                }
                std::mem::swap(&mut scratch.delta, &mut scratch.delta_prev);
            }
        }
        loss
    }

    /// Loss and gradients for one (input, label) pair; convenience wrapper
    /// used by tests and the gradient oracle.
    pub fn backward(&self, x: &[f64], label: f64) -> Result<(f64, Gradients), EnsembleError> {
        if x.len() != self.input_dim() {
            return Err(EnsembleError::DimensionMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        let mut scratch = self.scratch();
        self.forward_into(x, &mut scratch);
        let mut grads = self.zero_gradients();
        let loss = self.backward_into(label, &mut scratch, &mut grads);
        Ok((loss, grads))
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Flat view over (layer, weight-or-bias, index) for perturbation
    /// tests.
    pub fn param(&self, flat: usize) -> f64 {
        let (layer, offset) = self.locate(flat);
        let l = &self.layers[layer];
        if offset < l.w.len() {
            l.w[offset]
        } else {
            l.b[offset - l.w.len()]
        }
    }

    pub fn param_mut(&mut self, flat: usize) -> &mut f64 {
        let (layer, offset) = self.locate(flat);
        let l = &mut self.layers[layer];
        if offset < l.w.len() {
            &mut l.w[offset]
        } else {
            let off = offset - l.w.len();
            &mut l.b[off]
        }
    }

    pub fn gradient_at(grads: &Gradients, flat: usize, member: &MlpMember) -> f64 {
        let (layer, offset) = member.locate(flat);
        let l = &grads[layer];
        if offset < l.w.len() {
            l.w[offset]
        } else {
            l.b[offset - l.w.len()]
        }
    }

    fn locate(&self, mut flat: usize) -> (usize, usize) {
        for (i, l) in self.layers.iter().enumerate() {
            let size = l.w.len() + l.b.len();
            if flat < size {
                return (i, flat);
            }
            flat -= size;
        }
        panic!("parameter index out of range");
    }
}

pub(crate) fn scale_gradients(grads: &mut Gradients, s: f64) {
    for g in grads.iter_mut() {
        g.scale(s);
    }
}

/// Gaussian negative log-likelihood for a scalar target, including the
/// 0.5*ln(2*pi) constant.
pub fn nll_loss(pred: &GaussianPrediction, label: f64) -> f64 {
    let residual = label - pred.mean;
    0.5 * (pred.variance.ln() + residual * residual / pred.variance)
        + 0.5 * (2.0 * std::f64::consts::PI).ln()
}
