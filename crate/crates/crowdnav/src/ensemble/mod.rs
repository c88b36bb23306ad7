//! Probabilistic ensemble: independently trained Gaussian-output MLPs
//! combined as a uniform mixture.

mod mlp;
mod train;

pub use mlp::{nll_loss, Gradients, Layer, MlpMember, Scratch, VAR_FLOOR};
pub use train::{train, EpochPoint, MemberReport, TrainConfig, TrainReport};

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("feature vector has length {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cannot train on an empty dataset")]
    EmptyDataset,
}

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("model file {path} is not valid JSON: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("model file {path} has version {found}, this build supports {supported}")]
    UnsupportedVersion { path: PathBuf, found: u32, supported: u32 },
    #[error("model file {path} is inconsistent: {reason}")]
    Inconsistent { path: PathBuf, reason: String },
}

/// A single Gaussian prediction in label units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrediction {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianPrediction {
    pub fn std(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// All member Gaussians for one input plus the uniform-mixture mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsemblePrediction {
    pub members: Vec<GaussianPrediction>,
    pub mixture_mean: f64,
}

/// Feature and label scaling captured at training time and stored with the
/// model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub label_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub members: Vec<MlpMember>,
    pub norm: Normalization,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    feature_dim: usize,
    normalization: Normalization,
    members: Vec<MlpMember>,
}

impl Ensemble {
    pub fn feature_dim(&self) -> usize {
        self.norm.feature_mean.len()
    }

    /// Applies the stored normalization, runs every member, and returns the
    /// per-member Gaussians and mixture mean in label units.
    pub fn predict(&self, features: &[f64]) -> Result<EnsemblePrediction, EnsembleError> {
        if features.len() != self.feature_dim() {
            return Err(EnsembleError::DimensionMismatch {
                expected: self.feature_dim(),
                found: features.len(),
            });
        }
        let normalized: Vec<f64> = features
            .iter()
            .zip(self.norm.feature_mean.iter().zip(&self.norm.feature_std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect();
        let scale = self.norm.label_scale;
        let members: Vec<GaussianPrediction> = self
            .members
            .iter()
            .map(|member| {
                let raw = member.forward(&normalized).expect("dims checked");
                GaussianPrediction { mean: raw.mean * scale, variance: raw.variance * scale * scale }
            })
            .collect();
        let mixture_mean = members.iter().map(|g| g.mean).sum::<f64>() / members.len() as f64;
        Ok(EnsemblePrediction { members, mixture_mean })
    }

    /// Serializes the ensemble (version, feature dim, normalization stats,
    /// per-member layer shapes and row-major weights) as JSON.
    pub fn save(&self, path: &Path) -> Result<(), ModelFileError> {
        let file = ModelFile {
            version: MODEL_VERSION,
            feature_dim: self.feature_dim(),
            normalization: self.norm.clone(),
            members: self.members.clone(),
        };
        let json = serde_json::to_string(&file).expect("model serializes");
        std::fs::write(path, json)
            .map_err(|source| ModelFileError::Io { path: path.to_path_buf(), source })
    }

    pub fn load(path: &Path) -> Result<Ensemble, ModelFileError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ModelFileError::Io { path: path.to_path_buf(), source })?;
        // Check the version before full decoding so format evolution yields
        // a clear error rather than a field mismatch.
        let probe: serde_json::Value = serde_json::from_str(&text)
            .map_err(|source| ModelFileError::Parse { path: path.to_path_buf(), source })?;
        let version = probe.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if version != MODEL_VERSION {
            return Err(ModelFileError::UnsupportedVersion {
                path: path.to_path_buf(),
                found: version,
                supported: MODEL_VERSION,
            });
        }
        let file: ModelFile = serde_json::from_str(&text)
            .map_err(|source| ModelFileError::Parse { path: path.to_path_buf(), source })?;
        let ensemble = Ensemble { members: file.members, norm: file.normalization };
        if ensemble.members.is_empty() {
            return Err(ModelFileError::Inconsistent {
                path: path.to_path_buf(),
                reason: "no members".into(),
            });
        }
        for member in &ensemble.members {
            if member.input_dim() != file.feature_dim {
                return Err(ModelFileError::Inconsistent {
                    path: path.to_path_buf(),
                    reason: format!(
                        "member expects {} inputs, file declares {}",
                        member.input_dim(),
                        file.feature_dim
                    ),
                });
            }
            let finite = member
                .layers
                .iter()
                .all(|l| l.w.iter().chain(&l.b).all(|v| v.is_finite()));
            if !finite {
                return Err(ModelFileError::Inconsistent {
                    path: path.to_path_buf(),
                    reason: "non-finite parameter".into(),
                });
            }
        }
        Ok(ensemble)
    }
}
