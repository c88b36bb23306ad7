//! World construction, stepping, and sensing.

use crate::config::ScenarioConfig;
use crate::geom::Vec2;
use crate::seeds;
use crate::sim::{
    sf_accel, ArenaBounds, EpisodeOutcome, HumanAgent, RobotState, Snapshot, StaticObstacle,
    WorldState,
};
use rand::Rng;
use thiserror::Error;

/// Tolerance at which a human is considered to have arrived at its goal and
/// draws a fresh one (keeps crowd density constant).
const HUMAN_GOAL_TOLERANCE: f64 = 0.3;

#[derive(Debug, Error)]
pub enum ScenarioSampleError {
    #[error("could not place {0} humans without overlap; arena too crowded")]
    Crowded(usize),
    #[error("robot start or goal outside the arena or inside an obstacle")]
    InvalidEndpoints,
}

#[derive(Debug, Error)]
pub enum StepError {
    #[error("robot command has non-finite components")]
    InvalidCommand,
}

fn point_free(p: Vec2, clearance: f64, obstacles: &[StaticObstacle]) -> bool {
    obstacles.iter().all(|o| o.surface_distance(p) >= clearance)
}

fn sample_free_point(
    rng: &mut impl Rng,
    arena: &ArenaBounds,
    inset: f64,
    clearance: f64,
    obstacles: &[StaticObstacle],
) -> Option<Vec2> {
    for _ in 0..1000 {
        let p = Vec2::new(
            rng.random_range(arena.min.x + inset..=arena.max.x - inset),
            rng.random_range(arena.min.y + inset..=arena.max.y - inset),
        );
        if point_free(p, clearance, obstacles) {
            return Some(p);
        }
    }
    None
}

/// Builds the initial world for a scenario and episode seed: fixed robot
/// start/goal, a crowd of random size with rejection-sampled disjoint
/// starting discs, and per-human random goals.
pub fn sample_world(scenario: &ScenarioConfig, seed: u64) -> Result<WorldState, ScenarioSampleError> {
    let arena = ArenaBounds::square(scenario.arena.half_extent);
    let robot_start = scenario.arena.robot_start;
    let goal = scenario.arena.goal;
    if !arena.contains(robot_start)
        || !arena.contains(goal)
        || !point_free(robot_start, scenario.robot.radius, &scenario.obstacles)
        || !point_free(goal, scenario.robot.radius, &scenario.obstacles)
    {
        return Err(ScenarioSampleError::InvalidEndpoints);
    }

    let mut rng = seeds::rng(seed, "scenario", 0);
    let count =
        rng.random_range(scenario.crowd.count_min..=scenario.crowd.count_max.max(scenario.crowd.count_min));
    let human_radius = scenario.crowd.radius;
    let separation = scenario.crowd.min_separation;

    let mut humans: Vec<HumanAgent> = Vec::with_capacity(count);
    for id in 0..count {
        let mut placed = false;
        for _ in 0..1000 {
            let p = Vec2::new(
                rng.random_range(arena.min.x + human_radius..=arena.max.x - human_radius),
                rng.random_range(arena.min.y + human_radius..=arena.max.y - human_radius),
            );
            let clear_of_obstacles = point_free(p, human_radius, &scenario.obstacles);
            let clear_of_robot =
                p.distance(robot_start) >= human_radius + scenario.robot.radius + separation;
            let clear_of_humans = humans
                .iter()
                .all(|h| p.distance(h.position) >= 2.0 * human_radius + separation);
            if clear_of_obstacles && clear_of_robot && clear_of_humans {
                let human_goal =
                    sample_free_point(&mut rng, &arena, human_radius, human_radius, &scenario.obstacles)
                        .unwrap_or(p);
                humans.push(HumanAgent {
                    id: id as u32,
                    position: p,
                    velocity: Vec2::ZERO,
                    goal: human_goal,
                    radius: human_radius,
                    v_max: scenario.crowd.v_max,
                    aware_of_robot: scenario.crowd.aware,
                });
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(ScenarioSampleError::Crowded(count));
        }
    }

    Ok(WorldState {
        time: 0.0,
        steps: 0,
        robot: RobotState {
            position: robot_start,
            velocity: Vec2::ZERO,
            radius: scenario.robot.radius,
            v_max: scenario.robot.v_max,
            sensing_range: scenario.robot.sensing_range,
        },
        humans,
        obstacles: scenario.obstacles.clone(),
        goal,
        rng_seed: seed,
        dt: scenario.sim.dt,
        arena,
        goal_tolerance: scenario.sim.goal_tolerance,
        sf: scenario.social_force,
        terminal: None,
        rng: seeds::rng(seed, "world", 0),
    })
}

/// Advances the world one control period: social-force integration for the
/// humans (semi-implicit Euler, speed-capped), a single-integrator Euler
/// step for the robot, then terminal-condition checks.
pub fn step_world(world: &WorldState, robot_cmd: Vec2) -> Result<WorldState, StepError> {
    if !robot_cmd.is_finite() {
        return Err(StepError::InvalidCommand);
    }
    let mut next = world.clone();
    let dt = world.dt;
    let cmd = robot_cmd.clamp_norm(world.robot.v_max);

    // Accelerations from the pre-step state so the update is simultaneous.
    let sf = &world.sf;
    let accels: Vec<Vec2> = world
        .humans
        .iter()
        .map(|agent| {
            let others: Vec<HumanAgent> = world
                .humans
                .iter()
                .filter(|h| h.id != agent.id)
                .cloned()
                .collect();
            sf_accel(agent, &others, &world.obstacles, &world.robot, sf)
        })
        .collect();

    for (human, accel) in next.humans.iter_mut().zip(accels) {
        human.velocity = (human.velocity + accel * dt).clamp_norm(human.v_max);
        human.position += human.velocity * dt;
    }

    next.robot.position += cmd * dt;
    next.robot.velocity = cmd;
    next.steps += 1;
    next.time = next.steps as f64 * dt;

    // Humans that arrive draw a fresh goal, in id order for determinism.
    let arena = next.arena;
    let obstacles = next.obstacles.clone();
    for human in next.humans.iter_mut() {
        if human.position.distance(human.goal) <= HUMAN_GOAL_TOLERANCE {
            if let Some(g) =
                sample_free_point(&mut next.rng, &arena, human.radius, human.radius, &obstacles)
            {
                human.goal = g;
            }
        }
    }

    if next.terminal.is_none() {
        let robot = &next.robot;
        let hit_human = next
            .humans
            .iter()
            .any(|h| robot.position.distance(h.position) < robot.radius + h.radius);
        let hit_obstacle = next
            .obstacles
            .iter()
            .any(|o| o.surface_distance(robot.position) < robot.radius);
        if hit_human || hit_obstacle {
            next.terminal = Some(EpisodeOutcome::Collision);
        } else if robot.position.distance(next.goal) <= next.goal_tolerance {
            next.terminal = Some(EpisodeOutcome::Reached);
        }
    }

    Ok(next)
}

/// What the robot perceives: humans within sensing range (center distance,
/// inclusive bound), the full static map, and the goal. Pure function of
/// the world.
pub fn sense(world: &WorldState) -> Snapshot {
    let visible_humans = world
        .humans
        .iter()
        .filter(|h| h.position.distance(world.robot.position) <= world.robot.sensing_range)
        .cloned()
        .collect();
    Snapshot {
        robot: world.robot.clone(),
        visible_humans,
        obstacles: world.obstacles.clone(),
        goal: world.goal,
        time: world.time,
    }
}
