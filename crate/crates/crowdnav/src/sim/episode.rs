//! The sense -> decide -> step episode loop with zone bookkeeping.

use crate::config::ScenarioConfig;
use crate::geom::Vec2;
use crate::metrics::{zone_of, Zone};
use crate::policy::DecisionTrace;
use crate::sim::world::StepError;
use crate::sim::{sample_world, sense, step_world, ScenarioSampleError, Snapshot, WorldState};
use serde::{Deserialize, Serialize};
use std::panic::{catch_unwind, AssertUnwindSafe};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeOutcome {
    Reached,
    Collision,
    Timeout,
    /// The policy returned an error or panicked; details in the diagnostic.
    PolicyFailure,
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("policy configuration: {0}")]
    Config(String),
    #[error("policy failure: {0}")]
    Failure(String),
}

/// One control decision: the velocity command to apply this period plus a
/// full trace of how it was chosen.
#[derive(Debug, Clone)]
pub struct Decision {
    pub control: Vec2,
    pub trace: DecisionTrace,
}

/// A navigation policy maps sensor snapshots to velocity commands.
pub trait NavigationPolicy {
    fn decide(&mut self, snap: &Snapshot) -> Result<Decision, PolicyError>;

    fn name(&self) -> &'static str {
        "custom"
    }
}

/// Hooks into the episode loop; used for logging and dataset collection.
pub trait EpisodeObserver {
    fn on_world_init(&mut self, _world: &WorldState) {}
    fn on_decision(&mut self, _snap: &Snapshot, _trace: &DecisionTrace) {}
    fn on_step(&mut self, _world: &WorldState) {}
}

pub struct NullObserver;

impl EpisodeObserver for NullObserver {}

/// Per-human proxemic occupancy over one episode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanZoneStats {
    pub id: u32,
    pub steps_in_zone: [u64; 4],
    pub entered: [bool; 4],
    pub total_steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub time: f64,
    pub robot: Vec2,
    pub humans: Vec<Vec2>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub success: bool,
    pub outcome: EpisodeOutcome,
    pub duration: f64,
    pub path_length: f64,
    pub per_human_zone_counts: Vec<HumanZoneStats>,
    pub trajectory: Vec<TrajectoryPoint>,
    pub diagnostic: Option<String>,
}

fn trajectory_point(world: &WorldState) -> TrajectoryPoint {
    TrajectoryPoint {
        time: world.time,
        robot: world.robot.position,
        humans: world.humans.iter().map(|h| h.position).collect(),
    }
}

/// Runs one full episode: sense, decide, step until the robot reaches the
/// goal, collides, times out, or the policy fails. Identical
/// (scenario, seed, policy) inputs produce identical results.
pub fn run_episode(
    policy: &mut dyn NavigationPolicy,
    scenario: &ScenarioConfig,
    seed: u64,
    observer: &mut dyn EpisodeObserver,
) -> Result<EpisodeResult, ScenarioSampleError> {
    let mut world = sample_world(scenario, seed)?;
    observer.on_world_init(&world);

    let mut zone_stats: Vec<HumanZoneStats> = world
        .humans
        .iter()
        .map(|h| HumanZoneStats {
            id: h.id,
            steps_in_zone: [0; 4],
            entered: [false; 4],
            total_steps: 0,
        })
        .collect();
    let mut trajectory = vec![trajectory_point(&world)];
    let mut path_length = 0.0;
    let timeout = scenario.sim.timeout;
    let bands = scenario.zones;

    if world.robot.position.distance(world.goal) <= world.goal_tolerance {
        return Ok(EpisodeResult {
            success: true,
            outcome: EpisodeOutcome::Reached,
            duration: 0.0,
            path_length: 0.0,
            per_human_zone_counts: zone_stats,
            trajectory,
            diagnostic: None,
        });
    }

    let (outcome, diagnostic) = loop {
        let snap = sense(&world);
        let decided = catch_unwind(AssertUnwindSafe(|| policy.decide(&snap)));
        let control = match decided {
            Err(payload) => {
                let msg = payload
                    .downcast_ref::<&str>()
                    .map(|s| (*s).to_string())
                    .or_else(|| payload.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "policy panicked".to_string());
                break (EpisodeOutcome::PolicyFailure, Some(msg));
            }
            Ok(Err(err)) => break (EpisodeOutcome::PolicyFailure, Some(err.to_string())),
            Ok(Ok(decision)) => {
                observer.on_decision(&snap, &decision.trace);
                decision.control
            }
        };

        let previous = world.robot.position;
        world = match step_world(&world, control) {
            Ok(next) => next,
            Err(StepError::InvalidCommand) => {
                break (EpisodeOutcome::PolicyFailure, Some(StepError::InvalidCommand.to_string()))
            }
        };
        path_length += world.robot.position.distance(previous);
        trajectory.push(trajectory_point(&world));
        for (human, stats) in world.humans.iter().zip(zone_stats.iter_mut()) {
            let zone: Zone = zone_of(&world.robot, human, &bands);
            stats.steps_in_zone[zone.index()] += 1;
            stats.entered[zone.index()] = true;
            stats.total_steps += 1;
        }
        observer.on_step(&world);

        if let Some(outcome) = world.terminal {
            break (outcome, None);
        }
        if world.time >= timeout - 1e-9 {
            break (EpisodeOutcome::Timeout, None);
        }
    };

    Ok(EpisodeResult {
        success: outcome == EpisodeOutcome::Reached,
        outcome,
        duration: world.steps as f64 * world.dt,
        path_length,
        per_human_zone_counts: zone_stats,
        trajectory,
        diagnostic,
    })
}
