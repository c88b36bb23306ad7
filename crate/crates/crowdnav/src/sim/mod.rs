//! Discrete-time crowd world: social-force pedestrians, an omnidirectional
//! robot, range-limited sensing, and terminal-condition bookkeeping.

mod episode;
mod social_force;
mod world;

pub use episode::{
    run_episode, Decision, EpisodeObserver, EpisodeOutcome, EpisodeResult, HumanZoneStats,
    NavigationPolicy, NullObserver, PolicyError, TrajectoryPoint,
};
pub use social_force::{sf_accel, SocialForceParams};
pub use world::{sample_world, sense, step_world, ScenarioSampleError};

use crate::geom::Vec2;
use serde::{Deserialize, Serialize};

/// The navigating robot: position plus the velocity command applied last step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub position: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
    pub v_max: f64,
    pub sensing_range: f64,
}

/// One simulated pedestrian driven by the social-force model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanAgent {
    pub id: u32,
    pub position: Vec2,
    pub velocity: Vec2,
    pub goal: Vec2,
    pub radius: f64,
    pub v_max: f64,
    /// When false the human ignores the robot entirely and only avoids
    /// other humans and static obstacles.
    pub aware_of_robot: bool,
}

/// A fixed circular obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaticObstacle {
    pub center: Vec2,
    pub radius: f64,
}

impl StaticObstacle {
    /// Surface distance from a point (negative inside the disc).
    pub fn surface_distance(&self, p: Vec2) -> f64 {
        p.distance(self.center) - self.radius
    }
}

/// Full mutable simulation state. Evolution is deterministic given the
/// initial state, the rng seed, and the sequence of robot commands.
#[derive(Debug, Clone)]
pub struct WorldState {
    /// Elapsed simulated time; always `steps as f64 * dt` exactly.
    pub time: f64,
    pub steps: u64,
    pub robot: RobotState,
    pub humans: Vec<HumanAgent>,
    pub obstacles: Vec<StaticObstacle>,
    pub goal: Vec2,
    pub rng_seed: u64,
    pub dt: f64,
    pub arena: ArenaBounds,
    pub goal_tolerance: f64,
    pub sf: SocialForceParams,
    /// Terminal flag set by `step_world` once the episode has ended.
    pub terminal: Option<EpisodeOutcome>,
    pub(crate) rng: rand_chacha::ChaCha8Rng,
}

/// Axis-aligned rectangular arena.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArenaBounds {
    pub min: Vec2,
    pub max: Vec2,
}

impl ArenaBounds {
    pub fn square(half_extent: f64) -> Self {
        ArenaBounds {
            min: Vec2::new(-half_extent, -half_extent),
            max: Vec2::new(half_extent, half_extent),
        }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn clamp(&self, p: Vec2) -> Vec2 {
        Vec2::new(p.x.clamp(self.min.x, self.max.x), p.y.clamp(self.min.y, self.max.y))
    }
}

/// What the robot can see at one instant: itself, humans within sensing
/// range, the (known) static map, and the episode goal.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Snapshot {
    pub robot: RobotState,
    pub visible_humans: Vec<HumanAgent>,
    pub obstacles: Vec<StaticObstacle>,
    pub goal: Vec2,
    pub time: f64,
}
