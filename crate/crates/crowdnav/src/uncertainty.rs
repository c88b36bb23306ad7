//! Ensemble-prediction filtering: epistemic disagreement via the
//! Jensen-Renyi divergence, aleatoric tails via worst-case Gaussian CVaR,
//! then minimum-risk selection.

use crate::ensemble::{EnsemblePrediction, GaussianPrediction};
use crate::geom::Vec2;
use crate::risk::CandidateWaypoint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("candidate count {candidates} does not match prediction count {predictions}")]
    LengthMismatch { candidates: usize, predictions: usize },
    #[error("filter_candidates requires at least one candidate")]
    Empty,
}

/// Thresholds of the two filtering stages. `cvar_bound` is in label units
/// (raw risk); the epistemic score is scale-free so its threshold applies
/// in any unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterThresholds {
    pub epistemic_max: f64,
    pub risk_tolerance: f64,
    pub cvar_bound: f64,
}

impl Default for FilterThresholds {
    fn default() -> Self {
        FilterThresholds { epistemic_max: 1.0, risk_tolerance: 0.1, cvar_bound: 70.0 }
    }
}

/// Similarity kernel between two member Gaussians: the value of the
/// convolution integral up to its 1/sqrt(2 pi) factor. Larger when the
/// members agree.
pub fn pairwise_term(a: &GaussianPrediction, b: &GaussianPrediction) -> f64 {
    let var_sum = a.variance + b.variance;
    let mean_diff = a.mean - b.mean;
    (1.0 / var_sum.sqrt()) * (-0.5 * mean_diff * mean_diff / var_sum).exp()
}

/// Jensen-Renyi divergence (quadratic entropy) of the uniform member
/// mixture: the mixture's collision entropy minus the members' average.
/// Zero when all members coincide; grows with disagreement. Concavity of
/// the quadratic Renyi entropy makes it non-negative.
pub fn epistemic_jrd(pred: &EnsemblePrediction) -> f64 {
    let m = pred.members.len();
    assert!(m >= 2, "epistemic divergence needs at least two members");
    let mut cross = 0.0;
    for a in &pred.members {
        for b in &pred.members {
            cross += pairwise_term(a, b);
        }
    }
    let self_terms: f64 = pred.members.iter().map(|g| pairwise_term(g, g).ln()).sum();
    -(cross / (m * m) as f64).ln() + self_terms / m as f64
}

/// Inverse standard-normal CDF, Wichura's AS 241 (PPND16) rational
/// approximation; relative error below 1e-15 over (0, 1).
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile requires p in (0,1)");
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        let num = (((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_812_8e4) * r
            + 6.726_577_092_700_870_1e4)
            * r
            + 4.592_195_393_154_987_1e4)
            * r
            + 1.373_169_376_550_946_1e4)
            * r
            + 1.971_590_950_306_551_3e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_608)
            * q;
        let den = ((((((5.226_495_278_852_545_611e3 * r + 2.872_908_573_572_194_3e4) * r
            + 3.930_789_580_009_271_1e4)
            * r
            + 2.121_379_430_158_659_7e4)
            * r
            + 5.394_196_021_424_751_1e3)
            * r
            + 6.871_870_074_920_579_083e2)
            * r
            + 4.231_333_070_160_091e1)
            * r
            + 1.0;
        return num / den;
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-r.ln()).sqrt();
    let value = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_545)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
            + 1.519_866_656_361_645_7e-2)
            * r
            + 1.481_039_764_274_800_8e-1)
            * r
            + 6.897_673_349_851e-1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_758_8)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_048_9e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114_3)
            * r
            + 6.657_904_643_501_103_8;
        let den = ((((((1.421_511_758_316_445_9e-15 * r + 1.846_318_317_510_054_8e-6) * r
            + 7.868_691_311_456_133e-4)
            * r
            + 1.487_536_129_085_061_5e-2)
            * r
            + 1.369_298_809_227_358e-1)
            * r
            + 5.998_322_065_558_88e-1)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -value
    } else {
        value
    }
}

fn standard_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Value at Risk of a Gaussian at tolerance `epsilon`: the smallest
/// threshold exceeded with probability at most `epsilon`, i.e.
/// `mean + std * z_(1-eps)`.
pub fn var_gaussian(g: &GaussianPrediction, epsilon: f64) -> f64 {
    g.mean + g.std() * normal_quantile(1.0 - epsilon)
}

/// Conditional Value at Risk of a Gaussian at tolerance `epsilon`: the mean
/// of the upper `epsilon` tail, `mean + std * pdf(z_(1-eps)) / eps`.
pub fn cvar_gaussian(g: &GaussianPrediction, epsilon: f64) -> f64 {
    let z = normal_quantile(1.0 - epsilon);
    g.mean + g.std() * standard_normal_pdf(z) / epsilon
}

/// Per-candidate filter outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateFilterRecord {
    pub epistemic: f64,
    pub member_var: Vec<f64>,
    pub member_cvar: Vec<f64>,
    pub sup_cvar: f64,
    pub mixture_mean: f64,
    pub passed_epistemic: bool,
    pub passed_aleatoric: bool,
}

impl CandidateFilterRecord {
    pub fn passed(&self) -> bool {
        self.passed_epistemic && self.passed_aleatoric
    }
}

/// Result of the two-stage filter over one candidate set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub records: Vec<CandidateFilterRecord>,
    pub selected: Option<usize>,
}

/// Applies both uncertainty stages and picks the minimum-mean survivor.
///
/// Stage 1 drops candidates whose epistemic divergence exceeds
/// `epistemic_max` (treated as out-of-distribution); stage 2 drops those
/// whose worst-case member CVaR exceeds `cvar_bound`. Among survivors the
/// smallest mixture mean wins, with ties broken by distance to `goal` and
/// then by candidate index. `selected` is `None` when nothing survives.
pub fn filter_candidates(
    candidates: &[CandidateWaypoint],
    predictions: &[EnsemblePrediction],
    goal: Vec2,
    thresholds: &FilterThresholds,
) -> Result<FilterReport, FilterError> {
    if candidates.is_empty() {
        return Err(FilterError::Empty);
    }
    if candidates.len() != predictions.len() {
        return Err(FilterError::LengthMismatch {
            candidates: candidates.len(),
            predictions: predictions.len(),
        });
    }
    let eps = thresholds.risk_tolerance;
    let records: Vec<CandidateFilterRecord> = predictions
        .iter()
        .map(|pred| {
            let epistemic = epistemic_jrd(pred);
            let member_var: Vec<f64> = pred.members.iter().map(|g| var_gaussian(g, eps)).collect();
            let member_cvar: Vec<f64> =
                pred.members.iter().map(|g| cvar_gaussian(g, eps)).collect();
            let sup_cvar = member_cvar.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            CandidateFilterRecord {
                epistemic,
                member_var,
                member_cvar,
                sup_cvar,
                mixture_mean: pred.mixture_mean,
                passed_epistemic: epistemic <= thresholds.epistemic_max,
                passed_aleatoric: sup_cvar <= thresholds.cvar_bound,
            }
        })
        .collect();

    let mut selected: Option<(usize, f64, f64)> = None;
    for (idx, record) in records.iter().enumerate() {
        if !record.passed() {
            continue;
        }
        let dist = candidates[idx].position.distance(goal);
        let better = match selected {
            None => true,
            Some((_, best_mean, best_dist)) => {
                record.mixture_mean < best_mean
                    || (record.mixture_mean == best_mean && dist < best_dist)
            }
        };
        if better {
            selected = Some((idx, record.mixture_mean, dist));
        }
    }

    Ok(FilterReport { records, selected: selected.map(|(idx, _, _)| idx) })
}
