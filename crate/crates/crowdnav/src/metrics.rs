//! Navigation and proxemic metrics aggregated over episode batches.

use crate::sim::{EpisodeResult, HumanAgent, RobotState};
use serde::{Deserialize, Serialize};

/// Hall's proxemic zones, ordered from closest to farthest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Zone {
    Intimate,
    Personal,
    Social,
    Public,
}

impl Zone {
    pub const ALL: [Zone; 4] = [Zone::Intimate, Zone::Personal, Zone::Social, Zone::Public];

    pub fn index(self) -> usize {
        match self {
            Zone::Intimate => 0,
            Zone::Personal => 1,
            Zone::Social => 2,
            Zone::Public => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Zone::Intimate => "intimate",
            Zone::Personal => "personal",
            Zone::Social => "social",
            Zone::Public => "public",
        }
    }
}

/// Proxemic band boundaries. Each band has a closed upper bound:
/// intimate (0, i], personal (i, p], social (p, s], public (s, inf).
///
/// Distances are surface-to-surface (center distance minus the radius sum)
/// by default; `center_distance` switches to center-to-center for
/// sensitivity checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ZoneBands {
    pub intimate_max: f64,
    pub personal_max: f64,
    pub social_max: f64,
    pub center_distance: bool,
}

impl Default for ZoneBands {
    fn default() -> Self {
        ZoneBands {
            intimate_max: 0.45,
            personal_max: 1.2,
            social_max: 3.6,
            center_distance: false,
        }
    }
}

impl ZoneBands {
    /// Classifies a distance (already in the configured convention) into a
    /// band. Non-positive distances (touching or overlapping bodies) fall
    /// into the intimate band.
    pub fn classify(&self, distance: f64) -> Zone {
        if distance <= self.intimate_max {
            Zone::Intimate
        } else if distance <= self.personal_max {
            Zone::Personal
        } else if distance <= self.social_max {
            Zone::Social
        } else {
            Zone::Public
        }
    }
}

/// Zone the given human occupies relative to the robot.
pub fn zone_of(robot: &RobotState, human: &HumanAgent, bands: &ZoneBands) -> Zone {
    let center = robot.position.distance(human.position);
    let d = if bands.center_distance { center } else { center - (robot.radius + human.radius) };
    bands.classify(d)
}

/// Batch-level navigation and social-awareness metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchMetrics {
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub avg_time: f64,
    pub avg_path_length: f64,
    /// Mean time over successful episodes only; `None` when there are none.
    pub avg_time_success: Option<f64>,
    pub avg_path_length_success: Option<f64>,
    /// Fraction of humans that ever entered each zone (once per episode).
    pub zone_entry_ratio: [f64; 4],
    /// Mean over humans of the fraction of their steps spent in each zone.
    pub zone_time_ratio: [f64; 4],
    /// Total human exposures: sum over episodes of the crowd size.
    pub human_exposure: u64,
}

/// Aggregates a non-empty batch of episode results.
///
/// Entry ratios count a human at most once per episode per zone. Time
/// ratios average each human's per-zone step fraction; humans present for
/// zero steps contribute nothing.
pub fn aggregate(results: &[EpisodeResult]) -> BatchMetrics {
    assert!(!results.is_empty(), "aggregate requires at least one episode");
    let episodes = results.len();
    let successes = results.iter().filter(|r| r.success).count();
    let total_time: f64 = results.iter().map(|r| r.duration).sum();
    let total_path: f64 = results.iter().map(|r| r.path_length).sum();
    let succ_time: f64 = results.iter().filter(|r| r.success).map(|r| r.duration).sum();
    let succ_path: f64 = results.iter().filter(|r| r.success).map(|r| r.path_length).sum();

    let mut exposure = 0u64;
    let mut entries = [0u64; 4];
    let mut time_ratio = [0.0f64; 4];
    for result in results {
        exposure += result.per_human_zone_counts.len() as u64;
        for human in &result.per_human_zone_counts {
            for zone in Zone::ALL {
                if human.entered[zone.index()] {
                    entries[zone.index()] += 1;
                }
            }
            if human.total_steps > 0 {
                for zone in Zone::ALL {
                    time_ratio[zone.index()] +=
                        human.steps_in_zone[zone.index()] as f64 / human.total_steps as f64;
                }
            }
        }
    }

    let entry_ratio = if exposure > 0 {
        entries.map(|n| n as f64 / exposure as f64)
    } else {
        [0.0; 4]
    };
    let time_ratio = if exposure > 0 {
        time_ratio.map(|t| t / exposure as f64)
    } else {
        [0.0; 4]
    };

    BatchMetrics {
        episodes,
        successes,
        success_rate: successes as f64 / episodes as f64,
        avg_time: total_time / episodes as f64,
        avg_path_length: total_path / episodes as f64,
        avg_time_success: (successes > 0).then(|| succ_time / successes as f64),
        avg_path_length_success: (successes > 0).then(|| succ_path / successes as f64),
        zone_entry_ratio: entry_ratio,
        zone_time_ratio: time_ratio,
        human_exposure: exposure,
    }
}

/// Header line for the metrics CSV (schema version 1).
pub const METRICS_CSV_HEADER: &str = "scenario,policy,episodes,successes,success_rate,avg_time,\
avg_path_length,avg_time_success,avg_path_length_success,\
entry_intimate,entry_personal,entry_social,entry_public,\
time_intimate,time_personal,time_social,time_public,human_exposure";

fn opt(v: Option<f64>) -> String {
    match v {
        Some(x) => x.to_string(),
        None => "NA".to_string(),
    }
}

/// One CSV row for a (scenario cell, policy) batch.
pub fn metrics_csv_row(scenario: &str, policy: &str, m: &BatchMetrics) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        scenario,
        policy,
        m.episodes,
        m.successes,
        m.success_rate,
        m.avg_time,
        m.avg_path_length,
        opt(m.avg_time_success),
        opt(m.avg_path_length_success),
        m.zone_entry_ratio[0],
        m.zone_entry_ratio[1],
        m.zone_entry_ratio[2],
        m.zone_entry_ratio[3],
        m.zone_time_ratio[0],
        m.zone_time_ratio[1],
        m.zone_time_ratio[2],
        m.zone_time_ratio[3],
        m.human_exposure,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec2;
    use crate::sim::{EpisodeOutcome, HumanZoneStats};
    use approx::assert_abs_diff_eq;

    fn robot_at(p: Vec2) -> RobotState {
        RobotState {
            position: p,
            velocity: Vec2::ZERO,
            radius: 0.3,
            v_max: 1.0,
            sensing_range: 5.0,
        }
    }

    fn human_at(p: Vec2) -> HumanAgent {
        HumanAgent {
            id: 0,
            position: p,
            velocity: Vec2::ZERO,
            goal: p,
            radius: 0.3,
            v_max: 1.0,
            aware_of_robot: true,
        }
    }

    #[test]
    fn zone_classification_uses_surface_distance() {
        let bands = ZoneBands::default();
        // Center distance 1.0, radii 0.3 + 0.3: surface 0.4 -> intimate.
        let z = zone_of(&robot_at(Vec2::ZERO), &human_at(Vec2::new(1.0, 0.0)), &bands);
        assert_eq!(z, Zone::Intimate);
        // Surface 2.0 -> social.
        let z = zone_of(&robot_at(Vec2::ZERO), &human_at(Vec2::new(2.6, 0.0)), &bands);
        assert_eq!(z, Zone::Social);
    }

    #[test]
    fn band_upper_bounds_are_closed() {
        let bands = ZoneBands::default();
        assert_eq!(bands.classify(0.45), Zone::Intimate);
        assert_eq!(bands.classify(0.450000001), Zone::Personal);
        assert_eq!(bands.classify(1.2), Zone::Personal);
        assert_eq!(bands.classify(3.6), Zone::Social);
        assert_eq!(bands.classify(3.6000001), Zone::Public);
        assert_eq!(bands.classify(-0.1), Zone::Intimate);
    }

    fn result_with(
        success: bool,
        duration: f64,
        path: f64,
        humans: Vec<HumanZoneStats>,
    ) -> EpisodeResult {
        EpisodeResult {
            success,
            outcome: if success { EpisodeOutcome::Reached } else { EpisodeOutcome::Timeout },
            duration,
            path_length: path,
            per_human_zone_counts: humans,
            trajectory: Vec::new(),
            diagnostic: None,
        }
    }

    fn zone_stats(id: u32, steps: [u64; 4]) -> HumanZoneStats {
        let total = steps.iter().sum();
        HumanZoneStats {
            id,
            steps_in_zone: steps,
            entered: steps.map(|s| s > 0),
            total_steps: total,
        }
    }

    #[test]
    fn success_rate_counts() {
        let results = vec![
            result_with(true, 10.0, 5.0, vec![]),
            result_with(true, 20.0, 8.0, vec![]),
            result_with(true, 30.0, 9.0, vec![]),
            result_with(false, 200.0, 50.0, vec![]),
        ];
        let m = aggregate(&results);
        assert_abs_diff_eq!(m.success_rate, 0.75);
        assert_abs_diff_eq!(m.avg_time, 65.0);
        assert_abs_diff_eq!(m.avg_time_success.unwrap(), 20.0);
    }

    #[test]
    fn entry_ratio_counts_humans_once_per_episode() {
        // 2 episodes x 3 humans; 2 distinct humans ever in the personal zone.
        let e1 = result_with(
            true,
            10.0,
            5.0,
            vec![
                zone_stats(0, [0, 4, 0, 6]),
                zone_stats(1, [0, 0, 10, 0]),
                zone_stats(2, [0, 0, 0, 10]),
            ],
        );
        let e2 = result_with(
            true,
            10.0,
            5.0,
            vec![
                zone_stats(0, [0, 2, 8, 0]),
                zone_stats(1, [0, 0, 0, 10]),
                zone_stats(2, [0, 0, 0, 10]),
            ],
        );
        let m = aggregate(&[e1, e2]);
        assert_abs_diff_eq!(m.zone_entry_ratio[Zone::Personal.index()], 2.0 / 6.0);
    }

    #[test]
    fn time_ratio_matches_hand_count() {
        // One human, 10 steps, 4 in the social zone.
        let e = result_with(true, 2.5, 1.0, vec![zone_stats(0, [0, 0, 4, 6])]);
        let m = aggregate(&[e]);
        assert_abs_diff_eq!(m.zone_time_ratio[Zone::Social.index()], 0.4);
    }

    #[test]
    fn time_ratios_sum_to_one_when_all_humans_stepped() {
        let e1 = result_with(true, 1.0, 1.0, vec![zone_stats(0, [1, 2, 3, 4]), zone_stats(1, [5, 0, 0, 2])]);
        let e2 = result_with(false, 1.0, 1.0, vec![zone_stats(0, [0, 0, 0, 9])]);
        let m = aggregate(&[e1, e2]);
        let total: f64 = m.zone_time_ratio.iter().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn no_successes_reports_undefined_markers() {
        let m = aggregate(&[result_with(false, 200.0, 10.0, vec![])]);
        assert!(m.avg_time_success.is_none());
        assert!(m.avg_path_length_success.is_none());
        let row = metrics_csv_row("cell", "policy", &m);
        assert!(row.contains("NA"));
    }

    #[test]
    fn aggregate_is_permutation_invariant() {
        let a = result_with(true, 10.0, 5.0, vec![zone_stats(0, [1, 1, 1, 1])]);
        let b = result_with(false, 20.0, 9.0, vec![zone_stats(0, [0, 2, 0, 2])]);
        let m1 = aggregate(&[a.clone(), b.clone()]);
        let m2 = aggregate(&[b, a]);
        assert_eq!(m1, m2);
    }
}
