//! Heuristic waypoint risk: inverse-distance path risk, head-on orientation
//! risk, goal distance, and goal-direction penalty, plus candidate sampling
//! and the feature encoding used for risk learning.

use crate::geom::Vec2;
use crate::sim::Snapshot;
use serde::{Deserialize, Serialize};

/// Length of the feature vector produced by [`featurize`].
pub const FEATURE_DIM: usize = 39;
/// Number of nearest-human slots in the feature vector.
pub const NEAREST_HUMANS: usize = 5;
/// Values per human slot: relative position, relative velocity, surface
/// distance, validity flag.
const HUMAN_SLOT: usize = 6;

/// Where a candidate waypoint came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateSource {
    LocalSample,
    GlobalGuidance,
}

/// A candidate local target, optionally annotated with its scored risk and
/// filter verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateWaypoint {
    pub position: Vec2,
    pub source: CandidateSource,
    pub risk: Option<f64>,
    pub passed_filters: Option<bool>,
}

impl CandidateWaypoint {
    pub fn new(position: Vec2, source: CandidateSource) -> Self {
        CandidateWaypoint { position, source, risk: None, passed_filters: None }
    }
}

/// Weights and constants of the heuristic risk terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeuristicParams {
    /// Scaling factor of the inverse-distance path risk.
    pub lambda_dist: f64,
    /// Singularity guard added to the minimum distance.
    pub epsilon_d: f64,
    /// Weight of the goal-direction penalty.
    pub lambda_dir: f64,
    /// Interpolation points per robot-to-candidate segment (endpoint
    /// inclusive, start exclusive).
    pub samples_per_segment: usize,
    /// Risk assigned to colliding candidates; also the label scale.
    pub risk_max: f64,
}

impl Default for HeuristicParams {
    fn default() -> Self {
        HeuristicParams {
            lambda_dist: 1.0,
            epsilon_d: 0.1,
            lambda_dir: 2.0,
            samples_per_segment: 8,
            risk_max: 100.0,
        }
    }
}

impl HeuristicParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.lambda_dist <= 0.0 || self.epsilon_d <= 0.0 || self.lambda_dir <= 0.0 {
            return Err("heuristic weights must be positive".into());
        }
        if self.samples_per_segment < 2 {
            return Err("heuristic.samples_per_segment must be at least 2".into());
        }
        if self.risk_max <= 0.0 {
            return Err("heuristic.risk_max must be positive".into());
        }
        Ok(())
    }
}

/// Component-wise risk of one candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskBreakdown {
    pub path: f64,
    pub orientation: f64,
    pub goal_dist: f64,
    pub dir_penalty: f64,
    pub total: f64,
    /// True when an interpolated point penetrates a human or obstacle disc;
    /// the total is then pinned at `risk_max` regardless of the components.
    pub collision: bool,
}

/// Ring layout of the locally sampled candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CandidateGeometry {
    pub ring_angles: usize,
    pub ring_radii: Vec<f64>,
}

impl Default for CandidateGeometry {
    fn default() -> Self {
        CandidateGeometry { ring_angles: 12, ring_radii: vec![1.5, 3.0] }
    }
}

/// Candidates on concentric rings around the robot, radius-major then by
/// angle starting at the world +x axis. Candidates inside obstacles are
/// kept so the candidate count stays fixed; scoring pins them at maximum
/// risk.
pub fn sample_candidates(snap: &Snapshot, n_ring: usize, radii: &[f64]) -> Vec<CandidateWaypoint> {
    debug_assert!(radii.iter().all(|r| *r <= snap.robot.sensing_range));
    let mut out = Vec::with_capacity(n_ring * radii.len());
    for &radius in radii {
        for k in 0..n_ring {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / n_ring as f64;
            let position = snap.robot.position + Vec2::from_angle(theta) * radius;
            out.push(CandidateWaypoint::new(position, CandidateSource::LocalSample));
        }
    }
    out
}

/// Interpolated points from `from` to `to`: `n` equally spaced samples,
/// exclusive of the start, inclusive of the endpoint.
fn segment_points(from: Vec2, to: Vec2, n: usize) -> impl Iterator<Item = Vec2> {
    let delta = to - from;
    (1..=n).map(move |k| from + delta * (k as f64 / n as f64))
}

/// Sentinel distance used when no humans or obstacles exist; drives the
/// inverse-distance risk to effectively zero.
const EMPTY_WORLD_DISTANCE: f64 = 1e6;

/// Minimum surface distance from a point to any visible human or obstacle.
fn min_surface_distance(snap: &Snapshot, p: Vec2) -> f64 {
    let mut d = EMPTY_WORLD_DISTANCE;
    for h in &snap.visible_humans {
        d = d.min(p.distance(h.position) - h.radius);
    }
    for o in &snap.obstacles {
        d = d.min(o.surface_distance(p));
    }
    d
}

/// Maximum inverse-distance risk over the interpolated segment points.
/// Returns `risk_max` when any point penetrates a disc.
pub fn path_risk(snap: &Snapshot, p: Vec2, params: &HeuristicParams) -> f64 {
    let mut worst = 0.0f64;
    for point in segment_points(snap.robot.position, p, params.samples_per_segment) {
        let d_min = min_surface_distance(snap, point);
        if d_min <= 0.0 {
            return params.risk_max;
        }
        worst = worst.max(params.lambda_dist / (d_min + params.epsilon_d));
    }
    worst
}

/// True when any interpolated point of the robot-to-candidate segment lies
/// inside a human or obstacle disc.
pub fn segment_collides(snap: &Snapshot, p: Vec2, params: &HeuristicParams) -> bool {
    segment_points(snap.robot.position, p, params.samples_per_segment)
        .any(|point| min_surface_distance(snap, point) <= 0.0)
}

/// Head-on interaction risk: at each interpolated point, exp(-cos theta)
/// between the robot's movement direction (toward the candidate) and the
/// nearest visible human's velocity, summed over points. Points with no
/// visible human contribute nothing; a stationary nearest human counts as
/// neutral (cos = 0).
pub fn orientation_risk(snap: &Snapshot, p: Vec2, params: &HeuristicParams) -> f64 {
    let movement = p - snap.robot.position;
    let move_dir = movement.normalized_or_zero(1e-12);
    if move_dir == Vec2::ZERO || snap.visible_humans.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for point in segment_points(snap.robot.position, p, params.samples_per_segment) {
        let nearest = snap
            .visible_humans
            .iter()
            .min_by(|a, b| {
                let da = point.distance(a.position);
                let db = point.distance(b.position);
                da.partial_cmp(&db).unwrap().then(a.id.cmp(&b.id))
            })
            .expect("non-empty");
        let vel_dir = nearest.velocity.normalized_or_zero(1e-9);
        let cos_theta = move_dir.dot(vel_dir);
        total += (-cos_theta).exp();
    }
    total
}

/// Euclidean distance from the candidate to the goal.
pub fn goal_dist(p: Vec2, goal: Vec2) -> f64 {
    p.distance(goal)
}

/// Misalignment penalty between the robot-to-candidate and robot-to-goal
/// directions. Degenerate geometry (candidate or goal at the robot) is
/// penalty-free.
pub fn dir_penalty(robot_pos: Vec2, p: Vec2, goal: Vec2, lambda_dir: f64) -> f64 {
    let to_p = (p - robot_pos).normalized_or_zero(1e-12);
    let to_goal = (goal - robot_pos).normalized_or_zero(1e-12);
    if to_p == Vec2::ZERO || to_goal == Vec2::ZERO {
        return 0.0;
    }
    lambda_dir * (1.0 - to_p.dot(to_goal))
}

/// Full heuristic risk of a candidate: the four components and their sum,
/// with the collision override.
pub fn total_risk(snap: &Snapshot, p: Vec2, params: &HeuristicParams) -> RiskBreakdown {
    let collision = segment_collides(snap, p, params);
    let path = path_risk(snap, p, params);
    let orientation = orientation_risk(snap, p, params);
    let goal = goal_dist(p, snap.goal);
    let dir = dir_penalty(snap.robot.position, p, snap.goal, params.lambda_dir);
    let total = if collision { params.risk_max } else { path + orientation + goal + dir };
    RiskBreakdown {
        path,
        orientation,
        goal_dist: goal,
        dir_penalty: dir,
        total,
        collision,
    }
}

/// Fixed-length feature encoding of (snapshot, candidate).
///
/// Layout (39 values):
/// - 0-1: robot velocity
/// - 2-3: goal offset from the robot
/// - 4-5: candidate offset from the robot
/// - 6: candidate-to-goal distance
/// - 7: nearest static-obstacle surface distance from the robot
/// - 8: nearest static-obstacle surface distance from the candidate
/// - 9-38: five nearest visible humans, each (relative position x2,
///   relative velocity x2, surface distance, validity flag), sorted by
///   distance from the robot and zero-padded.
///
/// Obstacle distances are clamped to the sensing range so obstacle-free
/// worlds stay in a bounded feature range.
pub fn featurize(snap: &Snapshot, p: Vec2) -> Vec<f64> {
    let robot = &snap.robot;
    let range = robot.sensing_range;
    let obstacle_distance = |point: Vec2| -> f64 {
        snap.obstacles
            .iter()
            .map(|o| o.surface_distance(point))
            .fold(range, f64::min)
    };

    let mut features = Vec::with_capacity(FEATURE_DIM);
    features.push(robot.velocity.x);
    features.push(robot.velocity.y);
    features.push(snap.goal.x - robot.position.x);
    features.push(snap.goal.y - robot.position.y);
    features.push(p.x - robot.position.x);
    features.push(p.y - robot.position.y);
    features.push(p.distance(snap.goal));
    features.push(obstacle_distance(robot.position));
    features.push(obstacle_distance(p));

    let mut order: Vec<usize> = (0..snap.visible_humans.len()).collect();
    order.sort_by(|&a, &b| {
        let ha = &snap.visible_humans[a];
        let hb = &snap.visible_humans[b];
        let da = robot.position.distance(ha.position);
        let db = robot.position.distance(hb.position);
        da.partial_cmp(&db).unwrap().then(ha.id.cmp(&hb.id))
    });
    for slot in 0..NEAREST_HUMANS {
        if let Some(&idx) = order.get(slot) {
            let h = &snap.visible_humans[idx];
            features.push(h.position.x - robot.position.x);
            features.push(h.position.y - robot.position.y);
            features.push(h.velocity.x - robot.velocity.x);
            features.push(h.velocity.y - robot.velocity.y);
            features.push(robot.position.distance(h.position) - (robot.radius + h.radius));
            features.push(1.0);
        } else {
            features.extend_from_slice(&[0.0; HUMAN_SLOT]);
        }
    }
    debug_assert_eq!(features.len(), FEATURE_DIM);
    features
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{HumanAgent, RobotState, StaticObstacle};
    use approx::assert_abs_diff_eq;

    fn snapshot(humans: Vec<HumanAgent>, obstacles: Vec<StaticObstacle>, goal: Vec2) -> Snapshot {
        Snapshot {
            robot: RobotState {
                position: Vec2::ZERO,
                velocity: Vec2::ZERO,
                radius: 0.3,
                v_max: 1.0,
                sensing_range: 5.0,
            },
            visible_humans: humans,
            obstacles,
            goal,
            time: 0.0,
        }
    }

    fn human(id: u32, pos: Vec2, vel: Vec2) -> HumanAgent {
        HumanAgent {
            id,
            position: pos,
            velocity: vel,
            goal: pos,
            radius: 0.3,
            v_max: 1.0,
            aware_of_robot: false,
        }
    }

    #[test]
    fn candidate_rings_have_fixed_count_and_radius() {
        let snap = snapshot(vec![], vec![], Vec2::new(4.0, 3.0));
        let cands = sample_candidates(&snap, 8, &[1.0, 2.0]);
        assert_eq!(cands.len(), 16);
        assert!(cands.iter().all(|c| c.position.norm() <= 2.0 + 1e-12));
        assert!(cands.iter().all(|c| c.source == CandidateSource::LocalSample));

        let single = sample_candidates(&snap, 1, &[1.0]);
        assert_eq!(single.len(), 1);
        assert_abs_diff_eq!(single[0].position.x, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(single[0].position.y, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn path_risk_single_obstacle() {
        // Candidate at the robot: every sample sits at the origin, surface
        // distance 0.7 from the disc at (1,0) r=0.3 -> 1/(0.7+0.1) = 1.25.
        let snap = snapshot(
            vec![],
            vec![StaticObstacle { center: Vec2::new(1.0, 0.0), radius: 0.3 }],
            Vec2::new(4.0, 0.0),
        );
        let params = HeuristicParams::default();
        let risk = path_risk(&snap, Vec2::ZERO, &params);
        assert_abs_diff_eq!(risk, 1.25, epsilon = 1e-12);
    }

    #[test]
    fn path_risk_empty_world_is_negligible() {
        let snap = snapshot(vec![], vec![], Vec2::new(4.0, 0.0));
        let params = HeuristicParams::default();
        let risk = path_risk(&snap, Vec2::new(1.0, 0.0), &params);
        assert!(risk < 1e-5);
    }

    #[test]
    fn path_risk_collision_returns_risk_max() {
        let snap = snapshot(
            vec![],
            vec![StaticObstacle { center: Vec2::new(1.0, 0.0), radius: 0.4 }],
            Vec2::new(4.0, 0.0),
        );
        let params = HeuristicParams::default();
        assert_eq!(path_risk(&snap, Vec2::new(2.0, 0.0), &params), params.risk_max);
        assert!(segment_collides(&snap, Vec2::new(2.0, 0.0), &params));
    }

    #[test]
    fn orientation_risk_parallel_head_on_perpendicular() {
        let params = HeuristicParams { samples_per_segment: 2, ..Default::default() };
        // Human far along +y except near one sample point, moving parallel
        // to the robot's +x direction.
        let parallel = snapshot(vec![human(0, Vec2::new(0.5, 1.0), Vec2::new(0.8, 0.0))], vec![], Vec2::new(4.0, 0.0));
        let r = orientation_risk(&parallel, Vec2::new(1.0, 0.0), &params);
        assert_abs_diff_eq!(r, 2.0 * (-1.0f64).exp(), epsilon = 1e-12);

        let head_on = snapshot(vec![human(0, Vec2::new(0.5, 1.0), Vec2::new(-0.8, 0.0))], vec![], Vec2::new(4.0, 0.0));
        let r = orientation_risk(&head_on, Vec2::new(1.0, 0.0), &params);
        assert_abs_diff_eq!(r, 2.0 * 1.0f64.exp(), epsilon = 1e-12);

        let perp = snapshot(vec![human(0, Vec2::new(0.5, 1.0), Vec2::new(0.0, 0.4))], vec![], Vec2::new(4.0, 0.0));
        let r = orientation_risk(&perp, Vec2::new(1.0, 0.0), &params);
        assert_abs_diff_eq!(r, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn orientation_risk_degenerate_segment_is_zero() {
        let params = HeuristicParams::default();
        let snap = snapshot(vec![human(0, Vec2::new(1.0, 0.0), Vec2::new(1.0, 0.0))], vec![], Vec2::new(4.0, 0.0));
        assert_eq!(orientation_risk(&snap, Vec2::ZERO, &params), 0.0);
    }

    #[test]
    fn goal_dist_examples() {
        assert_abs_diff_eq!(goal_dist(Vec2::ZERO, Vec2::new(4.0, 3.0)), 5.0);
        assert_abs_diff_eq!(goal_dist(Vec2::new(1.0, 2.0), Vec2::new(1.0, 2.0)), 0.0);
        assert_abs_diff_eq!(goal_dist(Vec2::new(1.0, 1.0), Vec2::new(1.0, 2.0)), 1.0);
    }

    #[test]
    fn dir_penalty_alignment_cases() {
        let robot = Vec2::ZERO;
        let goal = Vec2::new(4.0, 0.0);
        assert_abs_diff_eq!(dir_penalty(robot, Vec2::new(1.0, 0.0), goal, 1.0), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(dir_penalty(robot, Vec2::new(-1.0, 0.0), goal, 1.0), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(dir_penalty(robot, Vec2::new(0.0, 1.0), goal, 0.5), 0.5, epsilon = 1e-12);
        assert_eq!(dir_penalty(robot, robot, goal, 1.0), 0.0);
    }

    #[test]
    fn total_risk_empty_world_is_goal_terms_only() {
        let snap = snapshot(vec![], vec![], Vec2::new(4.0, 0.0));
        let params = HeuristicParams::default();
        let b = total_risk(&snap, Vec2::new(1.0, 0.0), &params);
        assert!(!b.collision);
        assert_abs_diff_eq!(b.goal_dist, 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.dir_penalty, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.orientation, 0.0, epsilon = 1e-12);
        assert!(b.path < 1e-5);
        assert_abs_diff_eq!(b.total, b.path + b.orientation + b.goal_dist + b.dir_penalty);
    }

    #[test]
    fn total_risk_collision_overrides_components() {
        let snap = snapshot(
            vec![],
            vec![StaticObstacle { center: Vec2::new(1.0, 0.0), radius: 0.4 }],
            Vec2::new(4.0, 0.0),
        );
        let params = HeuristicParams::default();
        let b = total_risk(&snap, Vec2::new(2.0, 0.0), &params);
        assert!(b.collision);
        assert_eq!(b.total, params.risk_max);
    }

    #[test]
    fn featurize_shape_and_padding() {
        let snap = snapshot(vec![], vec![], Vec2::new(4.0, 3.0));
        let f = featurize(&snap, Vec2::new(1.0, 0.0));
        assert_eq!(f.len(), FEATURE_DIM);
        // All human slots zero with validity flags 0.
        for slot in 0..NEAREST_HUMANS {
            let base = 9 + slot * HUMAN_SLOT;
            assert!(f[base..base + HUMAN_SLOT].iter().all(|v| *v == 0.0));
        }
        // Obstacle-free distances clamp to the sensing range.
        assert_eq!(f[7], 5.0);
        assert_eq!(f[8], 5.0);
    }

    #[test]
    fn featurize_truncates_to_nearest_five() {
        let humans: Vec<HumanAgent> = (0..7)
            .map(|i| human(i, Vec2::new(0.5 + 0.5 * i as f64, 0.0), Vec2::ZERO))
            .collect();
        let snap = snapshot(humans, vec![], Vec2::new(4.0, 3.0));
        let f = featurize(&snap, Vec2::new(1.0, 0.0));
        // Five slots populated, sorted by distance: x offsets 0.5..2.5.
        for slot in 0..NEAREST_HUMANS {
            let base = 9 + slot * HUMAN_SLOT;
            assert_abs_diff_eq!(f[base], 0.5 + 0.5 * slot as f64, epsilon = 1e-12);
            assert_eq!(f[base + 5], 1.0);
        }
    }

    #[test]
    fn featurize_is_permutation_invariant() {
        let a = human(0, Vec2::new(1.0, 0.2), Vec2::new(0.1, 0.0));
        let b = human(1, Vec2::new(-0.5, 1.0), Vec2::new(0.0, -0.3));
        let c = human(2, Vec2::new(2.0, 2.0), Vec2::new(0.5, 0.5));
        let goal = Vec2::new(4.0, 3.0);
        let f1 = featurize(&snapshot(vec![a.clone(), b.clone(), c.clone()], vec![], goal), Vec2::new(1.0, 1.0));
        let f2 = featurize(&snapshot(vec![c, a, b], vec![], goal), Vec2::new(1.0, 1.0));
        assert_eq!(f1, f2);
    }
}
