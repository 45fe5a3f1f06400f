//! Episode configuration, loadable from TOML with every field defaulted.

use hrc_core::dynamics::{make_double_integrator, DynamicsError, LqrSolution, NoiseModel, Workspace};
use hrc_core::humans::{HumanKind, HumanParams};
use hrc_core::planner::{Objective, RobotKind};
use hrc_core::safety::{SafetyConfig, SafetyError};
use hrc_core::CbpParams;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("duration_s must be a non-negative multiple of dt, got {duration_s} with dt {dt}")]
    Duration { duration_s: f64, dt: f64 },
    #[error("dt must be positive, got {0}")]
    Dt(f64),
    #[error("n_goals must be at least 1")]
    NoGoals,
    #[error("goal_radius must be positive, got {0}")]
    GoalRadius(f64),
    #[error("workspace must have positive size")]
    Workspace,
    #[error("human.gamma must be non-negative, got {0}")]
    Gamma(f64),
    #[error("human.confidence_threshold must lie in (1/N, 1], got {0}")]
    Threshold(f64),
    #[error("u_max must be positive")]
    ControlLimit,
    #[error("human.beta_h must be positive")]
    BetaH,
    #[error("human.noise variances must be finite and non-negative")]
    Noise,
    #[error("robot.beta_grid must be non-empty and positive")]
    BetaGrid,
    #[error("cbp parameters must be finite with beta_cbp >= 0")]
    Cbp,
    #[error("safety: {0}")]
    Safety(#[from] SafetyError),
    #[error("dynamics: {0}")]
    Dynamics(#[from] DynamicsError),
    #[error("could not read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("could not parse config: {0}")]
    Parse(#[from] toml::de::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HumanConfig {
    pub kind: HumanKind,
    pub gamma: f64,
    pub confidence_threshold: f64,
    pub u_max: f64,
    pub beta_h: f64,
    /// Diagonal of the process-noise covariance over `[px, vx, py, vy]`.
    pub noise: [f64; 4],
}

impl Default for HumanConfig {
    fn default() -> Self {
        let p = HumanParams::default();
        Self {
            kind: p.kind,
            gamma: p.gamma,
            confidence_threshold: p.confidence_threshold,
            u_max: p.u_max,
            beta_h: p.beta_h,
            noise: [4e-4, 2.5e-3, 4e-4, 2.5e-3],
        }
    }
}

impl HumanConfig {
    pub fn params(&self) -> HumanParams {
        HumanParams {
            gamma: self.gamma,
            kind: self.kind,
            confidence_threshold: self.confidence_threshold,
            u_max: self.u_max,
            beta_h: self.beta_h,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotConfig {
    pub kind: RobotKind,
    pub objective: Objective,
    pub u_max: f64,
    pub delta: f64,
    pub beta_grid: Vec<f64>,
    /// Fraction of the selection-key spread treated as a tie.
    pub tie_tolerance: f64,
    /// Proactive robots keep their goal until the mode or the inferred human
    /// goal changes (KL objective excepted).
    pub hold_decision: bool,
    /// Wrap the naive, reactive and proactive-model controllers in the
    /// long-term safety monitor. The safe proactive robot always has it.
    pub safety_monitor: bool,
}

impl Default for RobotConfig {
    fn default() -> Self {
        Self {
            kind: RobotKind::ProactiveModel,
            objective: Objective::Switching,
            u_max: 5.0,
            delta: 0.5,
            beta_grid: vec![0.05, 0.5, 5.0],
            tie_tolerance: 0.9,
            hold_decision: true,
            safety_monitor: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LqrConfig {
    pub q: [f64; 4],
    pub r: [f64; 2],
}

impl Default for LqrConfig {
    fn default() -> Self {
        Self { q: [1.0; 4], r: [1.0; 2] }
    }
}

/// Fixed starting layout; anything left out is sampled from the seed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutConfig {
    pub human: Option<[f64; 2]>,
    pub robot: Option<[f64; 2]>,
    pub goals: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    pub duration_s: f64,
    pub dt: f64,
    pub n_goals: usize,
    pub goal_radius: f64,
    pub workspace: Workspace,
    pub seed: u64,
    /// Evaluate and log the long-term safety probability every tick.
    pub record_safety: bool,
    /// Whether the robot takes part at all; `false` gives robot-absent
    /// reference rollouts.
    pub robot_present: bool,
    pub human: HumanConfig,
    pub robot: RobotConfig,
    pub lqr: LqrConfig,
    pub cbp: CbpParams,
    pub safety: SafetyConfig,
    pub layout: LayoutConfig,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            duration_s: 30.0,
            dt: 0.1,
            n_goals: 5,
            goal_radius: 0.5,
            workspace: Workspace::default(),
            seed: 0,
            record_safety: false,
            robot_present: true,
            human: HumanConfig::default(),
            robot: RobotConfig::default(),
            lqr: LqrConfig::default(),
            cbp: CbpParams::default(),
            safety: SafetyConfig::default(),
            layout: LayoutConfig::default(),
        }
    }
}

impl EpisodeConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn n_ticks(&self) -> usize {
        (self.duration_s / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(ConfigError::Dt(self.dt));
        }
        let ticks = self.duration_s / self.dt;
        if !(self.duration_s >= 0.0) || (ticks - ticks.round()).abs() > 1e-6 {
            return Err(ConfigError::Duration { duration_s: self.duration_s, dt: self.dt });
        }
        if self.n_goals < 1 {
            return Err(ConfigError::NoGoals);
        }
        if !(self.goal_radius > 0.0) {
            return Err(ConfigError::GoalRadius(self.goal_radius));
        }
        if !(self.workspace.width > 0.0 && self.workspace.height > 0.0) {
            return Err(ConfigError::Workspace);
        }
        let h = &self.human;
        if !(h.gamma >= 0.0) || !h.gamma.is_finite() {
            return Err(ConfigError::Gamma(h.gamma));
        }
        if !(h.confidence_threshold > 1.0 / self.n_goals as f64 && h.confidence_threshold <= 1.0) && self.n_goals > 1 {
            return Err(ConfigError::Threshold(h.confidence_threshold));
        }
        if !(h.u_max > 0.0) || !(self.robot.u_max > 0.0) {
            return Err(ConfigError::ControlLimit);
        }
        if !(h.beta_h > 0.0) {
            return Err(ConfigError::BetaH);
        }
        NoiseModel::from_diagonal(h.noise).map_err(|_| ConfigError::Noise)?;
        if self.robot.beta_grid.is_empty() || self.robot.beta_grid.iter().any(|b| !(*b > 0.0) || !b.is_finite()) {
            return Err(ConfigError::BetaGrid);
        }
        if !self.cbp.is_valid() {
            return Err(ConfigError::Cbp);
        }
        self.safety.validate()?;
        self.lqr()?;
        Ok(())
    }

    pub fn lqr(&self) -> Result<LqrSolution, ConfigError> {
        let model = make_double_integrator(self.dt)?;
        Ok(LqrSolution::from_diagonal(&model, self.lqr.q, self.lqr.r)?)
    }

    pub fn noise(&self) -> NoiseModel {
        NoiseModel::from_diagonal(self.human.noise).unwrap_or_else(|_| NoiseModel::zero())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = EpisodeConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.n_ticks(), 300);
    }

    #[test]
    fn toml_overrides() {
        let cfg = EpisodeConfig::from_toml_str(
            r#"
            duration_s = 10
            n_goals = 3
            [robot]
            kind = "reactive"
            objective = "courtesy"
            [safety]
            epsilon = 0.2
            "#,
        )
        .unwrap();
        assert_eq!(cfg.n_ticks(), 100);
        assert_eq!(cfg.robot.kind, RobotKind::Reactive);
        assert_eq!(cfg.robot.objective, Objective::Courtesy);
        assert_eq!(cfg.safety.epsilon, 0.2);
        assert_eq!(cfg.safety.horizon, 20);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(matches!(EpisodeConfig::from_toml_str("n_goals = 0"), Err(ConfigError::NoGoals)));
        assert!(matches!(EpisodeConfig::from_toml_str("duration_s = 1.05"), Err(ConfigError::Duration { .. })));
        assert!(matches!(EpisodeConfig::from_toml_str("[safety]\nepsilon = 2.0"), Err(ConfigError::Safety(_))));
        assert!(matches!(EpisodeConfig::from_toml_str("bogus = 1"), Err(ConfigError::Parse(_))));
        assert!(matches!(EpisodeConfig::from_toml_str("[human]\nconfidence_threshold = 0.1"), Err(ConfigError::Threshold(_))));
    }
}
