//! Ensemble training: independent members, Adam, plateau scheduler, and
//! early stopping on validation likelihood.

use crate::dataset::Dataset;
use crate::ensemble::mlp::{nll_loss, scale_gradients, Gradients, Layer, MlpMember};
use crate::ensemble::{Ensemble, EnsembleError, Normalization};
use crate::seeds;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Training hyperparameters. Defaults follow the offline risk-learning
/// protocol: three members of five fully connected layers, Adam at 1e-4,
/// batches of 256, a 0.5x plateau scheduler after 5 stagnant epochs, early
/// stop after 10, and 5%-of-std Gaussian feature noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub max_epochs: usize,
    pub scheduler_patience: usize,
    pub scheduler_factor: f64,
    pub early_stop_patience: usize,
    pub noise_std_frac: f64,
    pub val_split: f64,
    pub members: usize,
    pub hidden: Vec<usize>,
    /// Raw labels are divided by this before training (risk scale).
    pub label_scale: f64,
    pub seed: u64,
    /// Validation NLL must drop by more than this to count as improvement.
    pub improvement_tol: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            batch: 256,
            max_epochs: 1000,
            scheduler_patience: 5,
            scheduler_factor: 0.5,
            early_stop_patience: 10,
            noise_std_frac: 0.05,
            val_split: 0.15,
            members: 3,
            hidden: vec![128, 128, 64, 32],
            label_scale: 100.0,
            seed: 0,
            improvement_tol: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochPoint {
    pub epoch: usize,
    pub lr: f64,
    pub train_nll: f64,
    pub val_nll: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberReport {
    pub member: usize,
    pub initial_val_nll: f64,
    pub best_val_nll: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub early_stopped: bool,
    pub curve: Vec<EpochPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub members: Vec<MemberReport>,
    pub train_samples: usize,
    pub val_samples: usize,
}

struct AdamState {
    m: Gradients,
    v: Gradients,
    step: u64,
}

impl AdamState {
    fn new(member: &MlpMember) -> Self {
        AdamState { m: member.zero_gradients(), v: member.zero_gradients(), step: 0 }
    }

    fn update(&mut self, member: &mut MlpMember, grads: &Gradients, lr: f64) {
        const BETA1: f64 = 0.9;
        const BETA2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.step += 1;
        let bc1 = 1.0 - BETA1.powi(self.step as i32);
        let bc2 = 1.0 - BETA2.powi(self.step as i32);
        for ((layer, g), (m, v)) in member
            .layers
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            adam_axis(&mut layer.w, &g.w, &mut m.w, &mut v.w, lr, bc1, bc2, BETA1, BETA2, EPS);
            adam_axis(&mut layer.b, &g.b, &mut m.b, &mut v.b, lr, bc1, bc2, BETA1, BETA2, EPS);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn adam_axis(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    bc1: f64,
    bc2: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) {
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

struct NormalizedData {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<f64>,
}

impl NormalizedData {
    fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }
}

fn mean_val_nll(member: &MlpMember, data: &NormalizedData, indices: &[usize]) -> f64 {
    let mut scratch = member.scratch();
    let mut total = 0.0;
    for &i in indices {
        let pred = member.forward_into(data.row(i), &mut scratch);
        total += nll_loss(&pred, data.labels[i]);
    }
    total / indices.len() as f64
}

fn zero_grads(grads: &mut Gradients) {
    for g in grads.iter_mut() {
        g.w.iter_mut().for_each(|x| *x = 0.0);
        g.b.iter_mut().for_each(|x| *x = 0.0);
    }
}

struct MemberRun {
    member: MlpMember,
    report: MemberReport,
}

fn train_member(
    index: usize,
    data: &NormalizedData,
    train_idx: &[usize],
    val_idx: &[usize],
    cfg: &TrainConfig,
) -> MemberRun {
    let member_seed = seeds::derive(cfg.seed, "member", index as u64);
    let mut member = MlpMember::init(data.dim, &cfg.hidden, member_seed);
    let mut adam = AdamState::new(&member);
    let mut rng = seeds::rng(member_seed, "sgd", 0);
    let mut scratch = member.scratch();
    let mut grads = member.zero_gradients();
    let mut noisy = vec![0.0; data.dim];

    let initial_val_nll = mean_val_nll(&member, data, val_idx);
    let mut best = member.clone();
    let mut best_val = initial_val_nll;
    let mut best_epoch = 0;
    let mut lr = cfg.lr;
    let mut stagnant = 0usize;
    let mut since_reduce = 0usize;
    let mut curve = Vec::new();
    let mut order: Vec<usize> = train_idx.to_vec();
    let mut epochs_run = 0;
    let mut early_stopped = false;

    for epoch in 1..=cfg.max_epochs {
        epochs_run = epoch;
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for batch in order.chunks(cfg.batch.max(1)) {
            zero_grads(&mut grads);
            let mut batch_loss = 0.0;
            for &i in batch {
                let row = data.row(i);
                for (n, x) in noisy.iter_mut().zip(row) {
                    let z: f64 = rng.sample(StandardNormal);
                    // Features are z-scored, so unit std: 5% noise is
                    // noise_std_frac directly.
                    *n = x + cfg.noise_std_frac * z;
                }
                member.forward_into(&noisy, &mut scratch);
                batch_loss += member.backward_into(data.labels[i], &mut scratch, &mut grads);
            }
            scale_gradients(&mut grads, 1.0 / batch.len() as f64);
            adam.update(&mut member, &grads, lr);
            epoch_loss += batch_loss;
            seen += batch.len();
        }
        let train_nll = epoch_loss / seen.max(1) as f64;
        let val_nll = mean_val_nll(&member, data, val_idx);
        curve.push(EpochPoint { epoch, lr, train_nll, val_nll });

        if val_nll < best_val - cfg.improvement_tol {
            best_val = val_nll;
            best = member.clone();
            best_epoch = epoch;
            stagnant = 0;
            since_reduce = 0;
        } else {
            stagnant += 1;
            since_reduce += 1;
            if stagnant >= cfg.early_stop_patience {
                early_stopped = true;
                break;
            }
            if since_reduce >= cfg.scheduler_patience {
                lr *= cfg.scheduler_factor;
                since_reduce = 0;
            }
        }
    }

    MemberRun {
        member: best,
        report: MemberReport {
            member: index,
            initial_val_nll,
            best_val_nll: best_val,
            best_epoch,
            epochs_run,
            early_stopped,
            curve,
        },
    }
}

/// Trains the full ensemble on a raw dataset. Features are z-scored with
/// the training statistics, labels divided by `label_scale`; members train
/// independently (in parallel) from distinct seeded initializations and
/// return their best-validation parameters.
pub fn train(data: &Dataset, cfg: &TrainConfig) -> Result<(Ensemble, TrainReport), EnsembleError> {
    if data.is_empty() {
        return Err(EnsembleError::EmptyDataset);
    }
    let n = data.len();
    let dim = data.feature_dim;
    let (mean, raw_std) = data.feature_stats();
    let std: Vec<f64> = raw_std.iter().map(|s| if *s > 1e-8 { *s } else { 1.0 }).collect();

    let mut features = Vec::with_capacity(n * dim);
    for row in 0..n {
        for (j, x) in data.feature_row(row).iter().enumerate() {
            features.push((x - mean[j]) / std[j]);
        }
    }
    let labels: Vec<f64> = data.labels.iter().map(|l| l / cfg.label_scale).collect();
    let normalized = NormalizedData { dim, features, labels };

    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut seeds::rng(cfg.seed, "split", 0));
    let val_count = ((n as f64 * cfg.val_split).ceil() as usize).clamp(1, n.saturating_sub(1).max(1));
    let (val_idx, train_idx) = indices.split_at(val_count);
    let train_idx = if train_idx.is_empty() { val_idx } else { train_idx };

    let runs: Vec<MemberRun> = (0..cfg.members.max(1))
        .into_par_iter()
        .map(|j| train_member(j, &normalized, train_idx, val_idx, cfg))
        .collect();

    let mut members = Vec::with_capacity(runs.len());
    let mut reports = Vec::with_capacity(runs.len());
    for run in runs {
        members.push(run.member);
        reports.push(run.report);
    }

    Ok((
        Ensemble {
            members,
            norm: Normalization { feature_mean: mean, feature_std: std, label_scale: cfg.label_scale },
        },
        TrainReport {
            members: reports,
            train_samples: train_idx.len(),
            val_samples: val_idx.len(),
        },
    ))
}
