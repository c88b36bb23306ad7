//! Global path planning over the static map: a multi-directional
//! rapidly-exploring random tree with goal-biased sampling, subtree
//! absorption, and shortcut smoothing, replanned from the robot's live
//! position.

mod service;

pub use service::PlannerService;

use crate::geom::Vec2;
use crate::seeds;
use crate::sim::{ArenaBounds, StaticObstacle};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// Number of detached subtrees grown alongside the root tree.
    pub subtrees: usize,
    /// Probability of sampling the goal instead of a uniform point.
    pub goal_bias: f64,
    /// Maximum edge length when extending a tree.
    pub steer_step: f64,
    /// Random shortcut attempts after the greedy smoothing pass.
    pub smooth_attempts: usize,
    /// Iteration budget for one replanning cycle.
    pub cycle_budget: usize,
    /// Iteration budget when no path exists yet.
    pub initial_budget: usize,
    /// Arc distance ahead of the robot's path projection used as guidance.
    pub lookahead: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            subtrees: 4,
            goal_bias: 0.1,
            steer_step: 0.5,
            smooth_attempts: 50,
            cycle_budget: 2500,
            initial_budget: 20000,
            lookahead: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanRequest {
    pub start: Vec2,
    pub goal: Vec2,
    pub obstacles: Vec<StaticObstacle>,
    pub bounds: ArenaBounds,
    /// Obstacles are inflated by this clearance radius.
    pub robot_radius: f64,
    pub seed: u64,
}

/// A statically collision-free polyline from start to goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalPath {
    pub waypoints: Vec<Vec2>,
    /// Plan iteration counter, incremented per publication.
    pub stamp: u64,
}

impl GlobalPath {
    pub fn length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| w[0].distance(w[1])).sum()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlanError {
    #[error("start lies outside the free space")]
    StartBlocked,
    #[error("goal lies outside the free space")]
    GoalBlocked,
    #[error("no path found within the iteration budget")]
    BudgetExhausted,
}

fn point_free(p: Vec2, req: &PlanRequest) -> bool {
    req.bounds.contains(p)
        && req.obstacles.iter().all(|o| o.surface_distance(p) >= req.robot_radius)
}

fn segment_free(a: Vec2, b: Vec2, req: &PlanRequest) -> bool {
    req.obstacles
        .iter()
        .all(|o| Vec2::segment_distance(o.center, a, b) >= o.radius + req.robot_radius)
}

#[derive(Debug, Clone)]
struct Node {
    pos: Vec2,
    parent: Option<usize>,
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn rooted_at(pos: Vec2) -> Tree {
        Tree { nodes: vec![Node { pos, parent: None }] }
    }

    fn nearest(&self, p: Vec2) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, n) in self.nodes.iter().enumerate() {
            let d = n.pos.distance(p);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Extends toward `target` by at most the steer step; returns the new
    /// node index when the edge is collision-free.
    fn extend(&mut self, target: Vec2, step: f64, req: &PlanRequest) -> Option<usize> {
        let near = self.nearest(target);
        let from = self.nodes[near].pos;
        let offset = target - from;
        let dist = offset.norm();
        if dist < 1e-9 {
            return None;
        }
        let pos = if dist <= step { target } else { from + offset * (step / dist) };
        if !point_free(pos, req) || !segment_free(from, pos, req) {
            return None;
        }
        self.nodes.push(Node { pos, parent: Some(near) });
        Some(self.nodes.len() - 1)
    }

    /// Re-roots the tree at `new_root` by flipping parent pointers along
    /// the chain to the old root, then returns the node list.
    fn rerooted(mut self, new_root: usize) -> Vec<Node> {
        let mut chain = vec![new_root];
        let mut cursor = new_root;
        while let Some(parent) = self.nodes[cursor].parent {
            chain.push(parent);
            cursor = parent;
        }
        self.nodes[new_root].parent = None;
        for pair in chain.windows(2) {
            self.nodes[pair[1]].parent = Some(pair[0]);
        }
        self.nodes
    }
}

fn sample_point(rng: &mut ChaCha8Rng, req: &PlanRequest) -> Vec2 {
    Vec2::new(
        rng.random_range(req.bounds.min.x..=req.bounds.max.x),
        rng.random_range(req.bounds.min.y..=req.bounds.max.y),
    )
}

fn absorb_subtree(root: &mut Tree, sub: Tree, sub_connect: usize, root_anchor: usize) {
    let offset = root.nodes.len();
    let nodes = sub.rerooted(sub_connect);
    for (i, mut node) in nodes.into_iter().enumerate() {
        node.parent = match node.parent {
            Some(p) => Some(p + offset),
            None => {
                debug_assert_eq!(i, sub_connect);
                Some(root_anchor)
            }
        };
        // The re-rooted node itself hangs off the root tree anchor.
        root.nodes.push(node);
    }
}

fn extract_path(tree: &Tree, goal_idx: usize) -> Vec<Vec2> {
    let mut path = Vec::new();
    let mut cursor = Some(goal_idx);
    while let Some(i) = cursor {
        path.push(tree.nodes[i].pos);
        cursor = tree.nodes[i].parent;
    }
    path.reverse();
    path
}

fn smooth(path: &mut Vec<Vec2>, req: &PlanRequest, attempts: usize, rng: &mut ChaCha8Rng) {
    // Greedy string-pulling pass: from each vertex jump to the farthest
    // visible successor.
    let mut pulled = vec![path[0]];
    let mut i = 0;
    while i + 1 < path.len() {
        let mut j = path.len() - 1;
        while j > i + 1 && !segment_free(path[i], path[j], req) {
            j -= 1;
        }
        pulled.push(path[j]);
        i = j;
    }
    *path = pulled;

    for _ in 0..attempts {
        if path.len() < 3 {
            break;
        }
        let a = rng.random_range(0..path.len() - 2);
        let b = rng.random_range(a + 2..path.len());
        if segment_free(path[a], path[b], req) {
            path.drain(a + 1..b);
        }
    }
}

/// Single-shot plan: grows a root tree from the start plus detached
/// subtrees rooted at free samples; subtrees are absorbed into the root
/// tree when the trees meet. Returns a shortcut-smoothed path once the
/// goal connects, deterministically for a given seed.
pub fn plan(req: &PlanRequest, cfg: &PlannerConfig, budget: usize) -> Result<GlobalPath, PlanError> {
    if !point_free(req.start, req) {
        return Err(PlanError::StartBlocked);
    }
    if !point_free(req.goal, req) {
        return Err(PlanError::GoalBlocked);
    }

    let mut rng = seeds::rng(req.seed, "plan", 0);
    let mut root = Tree::rooted_at(req.start);
    let mut subs: Vec<Tree> = Vec::new();
    for _ in 0..cfg.subtrees {
        for _ in 0..50 {
            let p = sample_point(&mut rng, req);
            if point_free(p, req) {
                subs.push(Tree::rooted_at(p));
                break;
            }
        }
    }

    // Trivial shortcut: the goal may already be in line of sight.
    let goal_idx = 'search: {
        if segment_free(req.start, req.goal, req) {
            root.nodes.push(Node { pos: req.goal, parent: Some(0) });
            break 'search Some(root.nodes.len() - 1);
        }
        for _ in 0..budget {
            let target = if rng.random_range(0.0..1.0) < cfg.goal_bias {
                req.goal
            } else {
                sample_point(&mut rng, req)
            };

            if let Some(new_idx) = root.extend(target, cfg.steer_step, req) {
                let new_pos = root.nodes[new_idx].pos;
                // Goal capture from the root tree.
                if new_pos.distance(req.goal) <= cfg.steer_step
                    && segment_free(new_pos, req.goal, req)
                {
                    root.nodes.push(Node { pos: req.goal, parent: Some(new_idx) });
                    break 'search Some(root.nodes.len() - 1);
                }
                // Absorb any subtree the new node can reach.
                let mut s = 0;
                while s < subs.len() {
                    let reachable = subs[s]
                        .nodes
                        .iter()
                        .position(|n| {
                            n.pos.distance(new_pos) <= cfg.steer_step
                                && segment_free(new_pos, n.pos, req)
                        });
                    if let Some(connect) = reachable {
                        let sub = subs.swap_remove(s);
                        absorb_subtree(&mut root, sub, connect, new_idx);
                    } else {
                        s += 1;
                    }
                }
            }

            for s in 0..subs.len() {
                if let Some(new_idx) = subs[s].extend(target, cfg.steer_step, req) {
                    let new_pos = subs[s].nodes[new_idx].pos;
                    let anchor = root.nodes.iter().position(|n| {
                        n.pos.distance(new_pos) <= cfg.steer_step
                            && segment_free(new_pos, n.pos, req)
                    });
                    if let Some(anchor) = anchor {
                        let sub = subs.swap_remove(s);
                        absorb_subtree(&mut root, sub, new_idx, anchor);
                        break;
                    }
                }
            }
        }
        None
    };

    let Some(goal_idx) = goal_idx else {
        return Err(PlanError::BudgetExhausted);
    };
    let mut waypoints = extract_path(&root, goal_idx);
    smooth(&mut waypoints, req, cfg.smooth_attempts, &mut rng);
    Ok(GlobalPath { waypoints, stamp: 0 })
}

/// Projects the robot onto the path polyline and returns the point a fixed
/// arc distance farther along, or the goal when the remaining path is
/// shorter than the lookahead.
pub fn current_guidance(path: &GlobalPath, robot_pos: Vec2, lookahead: f64) -> Vec2 {
    let pts = &path.waypoints;
    assert!(!pts.is_empty(), "guidance requires a non-empty path");
    if pts.len() == 1 {
        return pts[0];
    }

    // Closest-point projection over all segments.
    let mut best_seg = 0;
    let mut best_t = 0.0;
    let mut best_d = f64::INFINITY;
    for (i, pair) in pts.windows(2).enumerate() {
        let ab = pair[1] - pair[0];
        let len_sq = ab.norm_sq();
        let t = if len_sq <= f64::EPSILON {
            0.0
        } else {
            ((robot_pos - pair[0]).dot(ab) / len_sq).clamp(0.0, 1.0)
        };
        let p = pair[0] + ab * t;
        let d = robot_pos.distance(p);
        if d < best_d {
            best_d = d;
            best_seg = i;
            best_t = t;
        }
    }

    let mut cursor = pts[best_seg] + (pts[best_seg + 1] - pts[best_seg]) * best_t;
    let mut remaining = lookahead;
    let mut seg = best_seg;
    loop {
        let seg_end = pts[seg + 1];
        let span = cursor.distance(seg_end);
        if span >= remaining {
            return cursor + (seg_end - cursor).normalized_or_zero(1e-12) * remaining;
        }
        remaining -= span;
        cursor = seg_end;
        seg += 1;
        if seg + 1 >= pts.len() {
            return *pts.last().expect("non-empty");
        }
    }
}

/// Deterministic in-loop replanning: one budget-capped plan attempt per
/// control period from the robot's live position, keeping the last valid
/// path (flagged degraded) when an attempt fails.
#[derive(Debug)]
pub struct LockstepPlanner {
    cfg: PlannerConfig,
    request: PlanRequest,
    attempt: u64,
    stamp: u64,
    path: Option<GlobalPath>,
    pub degraded: bool,
}

impl LockstepPlanner {
    pub fn new(request: PlanRequest, cfg: PlannerConfig) -> Self {
        LockstepPlanner { cfg, request, attempt: 0, stamp: 0, path: None, degraded: false }
    }

    pub fn replan_from(&mut self, robot_pos: Vec2) -> Option<&GlobalPath> {
        let mut req = self.request.clone();
        req.start = robot_pos;
        req.seed = seeds::derive(self.request.seed, "plan-cycle", self.attempt);
        self.attempt += 1;
        let budget =
            if self.path.is_none() { self.cfg.initial_budget } else { self.cfg.cycle_budget };
        match plan(&req, &self.cfg, budget) {
            Ok(mut p) => {
                self.stamp += 1;
                p.stamp = self.stamp;
                self.path = Some(p);
                self.degraded = false;
            }
            Err(_) => {
                self.degraded = true;
            }
        }
        self.path.as_ref()
    }

    pub fn latest(&self) -> Option<&GlobalPath> {
        self.path.as_ref()
    }

    /// Guidance waypoint from the latest path, or `fallback` when no plan
    /// has succeeded yet.
    pub fn guidance(&self, robot_pos: Vec2, fallback: Vec2) -> Vec2 {
        match &self.path {
            Some(path) => current_guidance(path, robot_pos, self.cfg.lookahead),
            None => fallback,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn request(obstacles: Vec<StaticObstacle>, seed: u64) -> PlanRequest {
        PlanRequest {
            start: Vec2::new(-4.5, -4.5),
            goal: Vec2::new(4.5, 4.5),
            obstacles,
            bounds: ArenaBounds::square(6.0),
            robot_radius: 0.3,
            seed,
        }
    }

    #[test]
    fn empty_map_path_is_nearly_straight() {
        let req = request(vec![], 1);
        let cfg = PlannerConfig::default();
        let path = plan(&req, &cfg, 20000).unwrap();
        let straight = req.start.distance(req.goal);
        assert!(path.length() <= 1.05 * straight, "length {} vs straight {straight}", path.length());
        assert_eq!(path.waypoints.first(), Some(&req.start));
        assert_eq!(path.waypoints.last(), Some(&req.goal));
    }

    #[test]
    fn central_disc_is_avoided_with_clearance() {
        let obstacle = StaticObstacle { center: Vec2::ZERO, radius: 1.0 };
        let req = request(vec![obstacle], 2);
        let cfg = PlannerConfig::default();
        let path = plan(&req, &cfg, 20000).unwrap();
        let straight = req.start.distance(req.goal);
        assert!(path.length() > straight);
        for v in &path.waypoints {
            assert!(v.distance(obstacle.center) >= 1.3 - 1e-9);
        }
        // Dense interpolation of every segment keeps clearance too.
        for pair in path.waypoints.windows(2) {
            for k in 0..=50 {
                let p = pair[0] + (pair[1] - pair[0]) * (k as f64 / 50.0);
                assert!(p.distance(obstacle.center) >= 1.3 - 1e-6);
            }
        }
    }

    #[test]
    fn goal_inside_obstacle_is_rejected() {
        let obstacle = StaticObstacle { center: Vec2::new(4.5, 4.5), radius: 0.5 };
        let req = request(vec![obstacle], 3);
        let err = plan(&req, &PlannerConfig::default(), 1000).unwrap_err();
        assert_eq!(err, PlanError::GoalBlocked);
    }

    #[test]
    fn plan_is_deterministic_for_a_seed() {
        let obstacle = StaticObstacle { center: Vec2::ZERO, radius: 1.0 };
        let req = request(vec![obstacle], 7);
        let cfg = PlannerConfig::default();
        let a = plan(&req, &cfg, 20000).unwrap();
        let b = plan(&req, &cfg, 20000).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn random_feasible_maps_succeed_within_budget() {
        let cfg = PlannerConfig::default();
        let mut successes = 0;
        let mut rng = crate::seeds::rng(99, "maps", 0);
        for seed in 0..100u64 {
            let mut obstacles = Vec::new();
            let count = rng.random_range(0..=6);
            for _ in 0..count {
                let c = Vec2::new(rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0));
                let r = rng.random_range(0.3..1.0);
                // Keep endpoints feasible.
                if c.distance(Vec2::new(-4.5, -4.5)) > r + 0.6
                    && c.distance(Vec2::new(4.5, 4.5)) > r + 0.6
                {
                    obstacles.push(StaticObstacle { center: c, radius: r });
                }
            }
            let req = request(obstacles, seed);
            if plan(&req, &cfg, 20000).is_ok() {
                successes += 1;
            }
        }
        assert!(successes >= 99, "only {successes}/100 maps solved");
    }

    #[test]
    fn guidance_walks_the_polyline() {
        let path = GlobalPath {
            waypoints: vec![Vec2::ZERO, Vec2::new(10.0, 0.0)],
            stamp: 1,
        };
        let g = current_guidance(&path, Vec2::ZERO, 3.0);
        assert_abs_diff_eq!(g.x, 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.y, 0.0, epsilon = 1e-12);

        // Within lookahead of the goal: the goal itself.
        let g = current_guidance(&path, Vec2::new(8.5, 0.0), 3.0);
        assert_eq!(g, Vec2::new(10.0, 0.0));
    }

    #[test]
    fn guidance_projects_off_path_robots_forward() {
        let path = GlobalPath {
            waypoints: vec![Vec2::ZERO, Vec2::new(10.0, 0.0)],
            stamp: 1,
        };
        // Robot abeam of x=4: projection at (4,0), guidance at (7,0).
        let g = current_guidance(&path, Vec2::new(4.0, 2.0), 3.0);
        assert_abs_diff_eq!(g.x, 7.0, epsilon = 1e-9);
        assert_abs_diff_eq!(g.y, 0.0, epsilon = 1e-9);
        // Never behind the projection.
        assert!(g.x >= 4.0);
    }

    #[test]
    fn lockstep_planner_keeps_last_path_when_degraded() {
        let obstacle = StaticObstacle { center: Vec2::ZERO, radius: 1.0 };
        let req = request(vec![obstacle], 11);
        let mut lp = LockstepPlanner::new(req, PlannerConfig::default());
        let stamp1 = lp.replan_from(Vec2::new(-4.5, -4.5)).unwrap().stamp;
        let stamp2 = lp.replan_from(Vec2::new(-4.0, -4.0)).unwrap().stamp;
        assert!(stamp2 > stamp1);
        assert!(!lp.degraded);
        // Replanning from inside the obstacle fails; the old path stays.
        let path = lp.replan_from(Vec2::ZERO).unwrap();
        assert_eq!(path.stamp, stamp2);
        assert!(lp.degraded);
    }
}
