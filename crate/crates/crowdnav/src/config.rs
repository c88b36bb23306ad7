//! Workbench configuration: structured text (TOML) with one section per
//! subsystem. Every field has a default, so a minimal file is valid.

use crate::ensemble::TrainConfig;
use crate::geom::Vec2;
use crate::metrics::ZoneBands;
use crate::mpc::MpcConfig;
use crate::planner::PlannerConfig;
use crate::risk::{CandidateGeometry, HeuristicParams};
use crate::sim::{SocialForceParams, StaticObstacle};
use crate::uncertainty::FilterThresholds;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error in {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: Box<toml::de::Error>,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArenaConfig {
    pub half_extent: f64,
    pub robot_start: Vec2,
    pub goal: Vec2,
}

impl Default for ArenaConfig {
    fn default() -> Self {
        ArenaConfig {
            half_extent: 6.0,
            robot_start: Vec2::new(-4.5, -4.5),
            goal: Vec2::new(4.5, 4.5),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub dt: f64,
    pub timeout: f64,
    pub goal_tolerance: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { dt: 0.25, timeout: 200.0, goal_tolerance: 0.3, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobotConfig {
    pub radius: f64,
    pub v_max: f64,
    pub sensing_range: f64,
}

impl Default for RobotConfig {
    fn default() -> Self {
        RobotConfig { radius: 0.3, v_max: 1.0, sensing_range: 5.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrowdConfig {
    pub count_min: usize,
    pub count_max: usize,
    pub aware: bool,
    pub radius: f64,
    pub v_max: f64,
    /// Minimum surface separation enforced between starting discs.
    pub min_separation: f64,
}

impl Default for CrowdConfig {
    fn default() -> Self {
        CrowdConfig {
            count_min: 5,
            count_max: 30,
            aware: true,
            radius: 0.3,
            v_max: 1.0,
            min_separation: 0.5,
        }
    }
}

/// Everything the simulator needs to build and run one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ScenarioConfig {
    pub arena: ArenaConfig,
    pub sim: SimConfig,
    pub robot: RobotConfig,
    pub crowd: CrowdConfig,
    pub social_force: SocialForceParams,
    pub obstacles: Vec<StaticObstacle>,
    pub zones: ZoneBands,
}

/// The four evaluation cells: static obstacle presence crossed with crowd
/// awareness of the robot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioCell {
    OpenAware,
    OpenUnaware,
    ObstacleAware,
    ObstacleUnaware,
}

impl ScenarioCell {
    pub const ALL: [ScenarioCell; 4] = [
        ScenarioCell::OpenAware,
        ScenarioCell::OpenUnaware,
        ScenarioCell::ObstacleAware,
        ScenarioCell::ObstacleUnaware,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioCell::OpenAware => "open_aware",
            ScenarioCell::OpenUnaware => "open_unaware",
            ScenarioCell::ObstacleAware => "obstacle_aware",
            ScenarioCell::ObstacleUnaware => "obstacle_unaware",
        }
    }

    pub fn parse(s: &str) -> Option<ScenarioCell> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }

    pub fn has_obstacle(self) -> bool {
        matches!(self, ScenarioCell::ObstacleAware | ScenarioCell::ObstacleUnaware)
    }

    pub fn aware(self) -> bool {
        matches!(self, ScenarioCell::OpenAware | ScenarioCell::ObstacleAware)
    }
}

impl ScenarioConfig {
    /// Specializes this scenario to an evaluation cell: obstacle cells use
    /// the configured obstacle list (or the standard central 1 m disc when
    /// the list is empty), open cells clear it; the awareness flag is set
    /// accordingly.
    pub fn with_cell(&self, cell: ScenarioCell) -> ScenarioConfig {
        let mut out = self.clone();
        out.crowd.aware = cell.aware();
        out.obstacles = if cell.has_obstacle() {
            if self.obstacles.is_empty() {
                vec![StaticObstacle { center: Vec2::ZERO, radius: 1.0 }]
            } else {
                self.obstacles.clone()
            }
        } else {
            Vec::new()
        };
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub cells: Vec<ScenarioCell>,
    pub episodes_per_cell: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { cells: ScenarioCell::ALL.to_vec(), episodes_per_cell: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollectConfig {
    /// Cells cycled through while generating episodes for the risk dataset.
    pub cells: Vec<ScenarioCell>,
    /// Record samples only every n-th decision step (1 = every step).
    pub stride: usize,
}

impl Default for CollectConfig {
    fn default() -> Self {
        CollectConfig { cells: ScenarioCell::ALL.to_vec(), stride: 1 }
    }
}

/// Full workbench configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct WorkbenchConfig {
    #[serde(flatten)]
    pub scenario: ScenarioConfig,
    pub heuristic: HeuristicParams,
    pub candidates: CandidateGeometry,
    pub filters: FilterThresholds,
    pub mpc: MpcConfig,
    pub planner: PlannerConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub collect: CollectConfig,
    /// Trained model consumed by the learned-risk policy.
    pub model_path: Option<PathBuf>,
}

impl WorkbenchConfig {
    pub fn load(path: &Path) -> Result<WorkbenchConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: WorkbenchConfig = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source: Box::new(source),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.scenario;
        if s.sim.dt <= 0.0 {
            return Err(ConfigError::Invalid("sim.dt must be positive".into()));
        }
        if s.sim.timeout <= 0.0 {
            return Err(ConfigError::Invalid("sim.timeout must be positive".into()));
        }
        if s.robot.radius <= 0.0 || s.robot.v_max <= 0.0 || s.robot.sensing_range <= 0.0 {
            return Err(ConfigError::Invalid("robot parameters must be positive".into()));
        }
        if s.crowd.count_min > s.crowd.count_max {
            return Err(ConfigError::Invalid("crowd.count_min exceeds crowd.count_max".into()));
        }
        if !(0.0..1.0).contains(&self.train.val_split) || self.train.val_split <= 0.0 {
            return Err(ConfigError::Invalid("train.val_split must lie in (0, 1)".into()));
        }
        if !(0.0..=0.5).contains(&self.filters.risk_tolerance) || self.filters.risk_tolerance <= 0.0 {
            return Err(ConfigError::Invalid("filters.risk_tolerance must lie in (0, 0.5]".into()));
        }
        self.heuristic.validate().map_err(ConfigError::Invalid)?;
        let max_radius = self.candidates.ring_radii.iter().cloned().fold(0.0, f64::max);
        if max_radius > s.robot.sensing_range {
            return Err(ConfigError::Invalid(
                "candidates.ring_radii must not exceed robot.sensing_range".into(),
            ));
        }
        self.mpc.validate().map_err(ConfigError::Invalid)?;
        if self.collect.stride == 0 {
            return Err(ConfigError::Invalid("collect.stride must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        WorkbenchConfig::default().validate().unwrap();
    }

    #[test]
    fn minimal_toml_parses_with_defaults() {
        let cfg: WorkbenchConfig = toml::from_str("").unwrap();
        assert_eq!(cfg.scenario.sim.dt, 0.25);
        assert_eq!(cfg.scenario.sim.timeout, 200.0);
        assert_eq!(cfg.scenario.robot.sensing_range, 5.0);
        assert_eq!(cfg.scenario.crowd.count_min, 5);
        assert_eq!(cfg.scenario.crowd.count_max, 30);
    }

    #[test]
    fn sections_override_defaults() {
        let text = r#"
            [sim]
            dt = 0.1
            [crowd]
            count_min = 2
            count_max = 4
            aware = false
            [[obstacles]]
            center = { x = 0.0, y = 0.0 }
            radius = 1.0
        "#;
        let cfg: WorkbenchConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.scenario.sim.dt, 0.1);
        assert!(!cfg.scenario.crowd.aware);
        assert_eq!(cfg.scenario.obstacles.len(), 1);
    }

    #[test]
    fn cell_overrides() {
        let base = ScenarioConfig::default();
        let open = base.with_cell(ScenarioCell::OpenUnaware);
        assert!(open.obstacles.is_empty());
        assert!(!open.crowd.aware);
        let obst = base.with_cell(ScenarioCell::ObstacleAware);
        assert_eq!(obst.obstacles.len(), 1);
        assert_eq!(obst.obstacles[0].radius, 1.0);
        assert!(obst.crowd.aware);
    }

    #[test]
    fn invalid_values_are_rejected() {
        let mut cfg = WorkbenchConfig::default();
        cfg.scenario.sim.dt = 0.0;
        assert!(cfg.validate().is_err());
    }
}
