//! Helbing-style social-force pedestrian dynamics.

use crate::geom::Vec2;
use crate::sim::{HumanAgent, RobotState, StaticObstacle};
use serde::{Deserialize, Serialize};

/// Tuning constants for the social-force law. Exposed in the scenario
/// config; defaults sit in the usual Helbing parameter range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SocialForceParams {
    /// Relaxation time tau of the goal-attraction term, seconds.
    pub relaxation_time: f64,
    /// Repulsion amplitude A, m/s^2.
    pub repulsion_strength: f64,
    /// Repulsion range B, meters of surface distance.
    pub repulsion_range: f64,
}

impl Default for SocialForceParams {
    fn default() -> Self {
        SocialForceParams {
            relaxation_time: 0.5,
            repulsion_strength: 2.0,
            repulsion_range: 0.35,
        }
    }
}

/// Deterministic unit direction used when two centers coincide exactly.
/// Derived from the lower agent id so both members of a pair agree on the
/// separation axis.
pub(crate) fn tie_break_axis(id: u32) -> Vec2 {
    // Golden-angle spacing keeps distinct ids off a common axis.
    Vec2::from_angle(f64::from(id) * 2.399_963_229_728_653)
}

fn repulsion(
    params: &SocialForceParams,
    from: Vec2,
    to: Vec2,
    radius_sum: f64,
    axis_id: u32,
) -> Vec2 {
    let offset = to - from;
    let dist = offset.norm();
    let dir = if dist > 1e-12 { offset / dist } else { tie_break_axis(axis_id) };
    let surface = dist - radius_sum;
    dir * (params.repulsion_strength * (-surface / params.repulsion_range).exp())
}

/// Social-force acceleration on `agent`: goal attraction relaxing the
/// velocity toward the desired one, plus exponential repulsion from other
/// humans, static obstacles, and (only when the agent is aware of it) the
/// robot.
///
/// `agent` must not appear in `others`.
pub fn sf_accel(
    agent: &HumanAgent,
    others: &[HumanAgent],
    obstacles: &[StaticObstacle],
    robot: &RobotState,
    params: &SocialForceParams,
) -> Vec2 {
    let desired = (agent.goal - agent.position).normalized_or_zero(1e-12) * agent.v_max;
    let mut accel = (desired - agent.velocity) / params.relaxation_time;

    for other in others {
        debug_assert_ne!(other.id, agent.id, "agent must not be in others");
        accel += repulsion(
            params,
            other.position,
            agent.position,
            agent.radius + other.radius,
            agent.id.min(other.id),
        );
    }
    for obstacle in obstacles {
        accel += repulsion(
            params,
            obstacle.center,
            agent.position,
            agent.radius + obstacle.radius,
            agent.id,
        );
    }
    if agent.aware_of_robot {
        accel += repulsion(
            params,
            robot.position,
            agent.position,
            agent.radius + robot.radius,
            agent.id,
        );
    }
    accel
}
