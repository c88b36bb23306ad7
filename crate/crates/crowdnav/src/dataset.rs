//! Risk dataset generation and on-disk format: a CSV of feature vectors
//! with heuristic risk labels plus a JSON sidecar of metadata.

use crate::config::WorkbenchConfig;
use crate::policy::{DecisionTrace, PolicyFactory, PolicyKind};
use crate::risk::{featurize, FEATURE_DIM};
use crate::seeds;
use crate::sim::{run_episode, EpisodeObserver, Snapshot};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// One training sample: a fixed-length feature vector and its scalar risk
/// label.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskSample {
    pub features: Vec<f64>,
    pub label: f64,
}

/// Column-of-rows dataset storage.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub feature_dim: usize,
    pub features: Vec<f64>,
    pub labels: Vec<f64>,
}

impl Dataset {
    pub fn new(feature_dim: usize) -> Self {
        Dataset { feature_dim, features: Vec::new(), labels: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_row(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    pub fn push(&mut self, sample: &RiskSample) {
        assert_eq!(sample.features.len(), self.feature_dim);
        self.features.extend_from_slice(&sample.features);
        self.labels.push(sample.label);
    }

    /// Per-feature mean and standard deviation (population).
    pub fn feature_stats(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.len().max(1) as f64;
        let dim = self.feature_dim;
        let mut mean = vec![0.0; dim];
        for row in 0..self.len() {
            for (m, v) in mean.iter_mut().zip(self.feature_row(row)) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= n;
        }
        let mut var = vec![0.0; dim];
        for row in 0..self.len() {
            for ((v, m), x) in var.iter_mut().zip(&mean).zip(self.feature_row(row)) {
                let d = x - m;
                *v += d * d;
            }
        }
        let std = var.into_iter().map(|v| (v / n).sqrt()).collect();
        (mean, std)
    }
}

/// Sidecar metadata written next to the dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub feature_dim: usize,
    pub samples: usize,
    pub episodes: usize,
    pub seed: u64,
    /// Labels are stored raw; training divides by this scale.
    pub label_scale: f64,
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed dataset row: {reason}")]
    Malformed { path: PathBuf, line: usize, reason: String },
    #[error("episode generation failed: {0}")]
    Episode(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

/// Writes the dataset CSV (`feature_0..feature_N,label` header) and its
/// `.meta.json` sidecar.
pub fn write_dataset(path: &Path, data: &Dataset, meta: &DatasetMeta) -> Result<(), DatasetError> {
    let mut out = String::new();
    for i in 0..data.feature_dim {
        out.push_str(&format!("feature_{i},"));
    }
    out.push_str("label\n");
    for row in 0..data.len() {
        for v in data.feature_row(row) {
            out.push_str(&v.to_string());
            out.push(',');
        }
        out.push_str(&data.labels[row].to_string());
        out.push('\n');
    }
    let mut file = std::fs::File::create(path).map_err(io_err(path))?;
    file.write_all(out.as_bytes()).map_err(io_err(path))?;

    let meta_path = sidecar_path(path);
    let meta_json = serde_json::to_string_pretty(meta).expect("meta serializes");
    std::fs::write(&meta_path, meta_json).map_err(io_err(&meta_path))?;
    Ok(())
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".meta.json");
    PathBuf::from(p)
}

/// Reads a dataset CSV; the sidecar is optional.
pub fn read_dataset(path: &Path) -> Result<(Dataset, Option<DatasetMeta>), DatasetError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| DatasetError::Malformed {
        path: path.to_path_buf(),
        line: 1,
        reason: "empty file".into(),
    })?;
    let columns = header.split(',').count();
    if columns < 2 {
        return Err(DatasetError::Malformed {
            path: path.to_path_buf(),
            line: 1,
            reason: "header must contain features and a label".into(),
        });
    }
    let feature_dim = columns - 1;
    let mut data = Dataset::new(feature_dim);
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut values = Vec::with_capacity(columns);
        for field in line.split(',') {
            let v: f64 = field.parse().map_err(|_| DatasetError::Malformed {
                path: path.to_path_buf(),
                line: idx + 1,
                reason: format!("not a number: {field:?}"),
            })?;
            values.push(v);
        }
        if values.len() != columns {
            return Err(DatasetError::Malformed {
                path: path.to_path_buf(),
                line: idx + 1,
                reason: format!("expected {columns} fields, found {}", values.len()),
            });
        }
        let label = values.pop().expect("label column");
        data.features.extend_from_slice(&values);
        data.labels.push(label);
    }

    let meta_path = sidecar_path(path);
    let meta = match std::fs::read_to_string(&meta_path) {
        Ok(text) => serde_json::from_str(&text).ok(),
        Err(_) => None,
    };
    Ok((data, meta))
}

struct SampleRecorder {
    stride: usize,
    decision_index: usize,
    risk_max: f64,
    samples: Vec<RiskSample>,
}

impl EpisodeObserver for SampleRecorder {
    fn on_decision(&mut self, snap: &Snapshot, trace: &DecisionTrace) {
        let take = self.decision_index % self.stride == 0;
        self.decision_index += 1;
        if !take {
            return;
        }
        for cand in &trace.candidates {
            let Some(risk) = cand.risk else { continue };
            self.samples.push(RiskSample {
                features: featurize(snap, cand.position),
                label: risk.clamp(0.0, self.risk_max),
            });
        }
    }
}

/// Outcome summary of a collection run.
#[derive(Debug, Clone, Serialize)]
pub struct CollectStats {
    pub episodes: usize,
    pub successes: usize,
    pub samples: usize,
}

/// Generates a risk dataset by running heuristic-risk episodes across the
/// configured scenario cells and recording every scored candidate at every
/// decision step. Episodes run in parallel and merge in index order, so the
/// output is deterministic for a given seed.
pub fn collect_dataset(
    cfg: &WorkbenchConfig,
    episodes: usize,
    seed: u64,
) -> Result<(Dataset, CollectStats), DatasetError> {
    let cells = if cfg.collect.cells.is_empty() {
        crate::config::ScenarioCell::ALL.to_vec()
    } else {
        cfg.collect.cells.clone()
    };
    let factory = PolicyFactory::new(cfg.clone(), None);

    let per_episode: Vec<Result<(Vec<RiskSample>, bool), DatasetError>> = (0..episodes)
        .into_par_iter()
        .map(|i| {
            let cell = cells[i % cells.len()];
            let scenario = cfg.scenario.with_cell(cell);
            let episode_seed = seeds::derive(seed, "collect-episode", i as u64);
            let mut policy = factory
                .make(PolicyKind::HrMpc, episode_seed)
                .map_err(|e| DatasetError::Episode(e.to_string()))?;
            let mut recorder = SampleRecorder {
                stride: cfg.collect.stride.max(1),
                decision_index: 0,
                risk_max: cfg.heuristic.risk_max,
                samples: Vec::new(),
            };
            let result = run_episode(policy.as_mut(), &scenario, episode_seed, &mut recorder)
                .map_err(|e| DatasetError::Episode(e.to_string()))?;
            Ok((recorder.samples, result.success))
        })
        .collect();

    let mut data = Dataset::new(FEATURE_DIM);
    let mut successes = 0;
    for result in per_episode {
        let (samples, success) = result?;
        if success {
            successes += 1;
        }
        for s in &samples {
            data.push(s);
        }
    }
    let stats = CollectStats { episodes, successes, samples: data.len() };
    Ok((data, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip_preserves_values_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let mut data = Dataset::new(3);
        data.push(&RiskSample { features: vec![0.1, -2.5, 1e-9], label: 0.25 });
        data.push(&RiskSample { features: vec![1.0 / 3.0, 7.125, -0.0], label: 99.999 });
        let (mean, std) = data.feature_stats();
        let meta = DatasetMeta {
            feature_dim: 3,
            samples: data.len(),
            episodes: 1,
            seed: 42,
            label_scale: 100.0,
            feature_mean: mean,
            feature_std: std,
        };
        write_dataset(&path, &data, &meta).unwrap();
        let (back, meta_back) = read_dataset(&path).unwrap();
        assert_eq!(back, data);
        assert_eq!(meta_back.unwrap(), meta);
    }

    #[test]
    fn malformed_rows_are_reported_with_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "feature_0,label\n1.0,2.0\nx,1.0\n").unwrap();
        let err = read_dataset(&path).unwrap_err();
        assert!(err.to_string().contains(":3:"), "unexpected error: {err}");
    }

    #[test]
    fn feature_stats_match_hand_computation() {
        let mut data = Dataset::new(2);
        data.push(&RiskSample { features: vec![1.0, 0.0], label: 0.0 });
        data.push(&RiskSample { features: vec![3.0, 0.0], label: 0.0 });
        let (mean, std) = data.feature_stats();
        assert_eq!(mean, vec![2.0, 0.0]);
        assert_eq!(std, vec![1.0, 0.0]);
    }
}
