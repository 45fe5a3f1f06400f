//! Long-term probabilistic safety.
//!
//! Safety is a minimum-separation barrier `φ = ‖p_R − p_H‖ − d_min`. The
//! probability that an `H`-step pursuit rollout stays in the safe set is
//! estimated by Monte Carlo over the human's goal (sampled from the
//! conditional posterior) and the human's process noise. When that
//! probability falls to `1 − ε` or below, the robot is pulled toward the
//! nearest sampled state that is safe enough. Candidate trajectories for the
//! full pipeline are rolled out under potential-field repulsion from
//! synthetic obstacles and from every human mode's nominal path, and kept
//! only if they clear a margin that grows as `σ√t`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::GoalSet;
use crate::cbp::{conditional_belief, overall_posterior, CbpParams, OverallPosterior};
use crate::dynamics::{saturate, step_human, step_robot, AgentState, LqrSolution, NoiseModel, Vec2, Workspace};
use crate::humans::inverse_square_push;
use crate::planner::{objective_costs, objective_mode, select_goal, Mode, Objective, PlannerState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SafetyError {
    #[error("safety.d_min must be positive, got {0}")]
    DMin(f64),
    #[error("safety.epsilon must lie in (0, 1), got {0}")]
    Epsilon(f64),
    #[error("safety.horizon must be at least 1")]
    Horizon,
    #[error("safety.n_samples must be at least 100, got {0}")]
    Samples(usize),
    #[error("safety.k_pf must be finite and non-negative, got {0}")]
    Gain(f64),
    #[error("safety.sigma_modes entries must be finite and non-negative")]
    Sigma,
    #[error("safety.n_radius_samples must be at least 1")]
    RadiusSamples,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SafetyConfig {
    pub d_min: f64,
    pub epsilon: f64,
    pub horizon: usize,
    pub n_samples: usize,
    pub k_pf: f64,
    /// Per-mode initial uncertainty; `None` derives it from the human noise.
    pub sigma_modes: Option<Vec<f64>>,
    pub n_obstacles: usize,
    pub obstacle_radius: f64,
    pub n_radius_samples: usize,
    /// Skip Monte Carlo when the robot's pursuit path stays this far from
    /// every nominal human path. `None` disables the gate.
    pub gate_radius: Option<f64>,
}

impl Default for SafetyConfig {
    fn default() -> Self {
        Self {
            d_min: 0.5,
            epsilon: 0.1,
            horizon: 20,
            n_samples: 1000,
            k_pf: 10.0,
            sigma_modes: None,
            n_obstacles: 8,
            obstacle_radius: 1.5,
            n_radius_samples: 16,
            gate_radius: None,
        }
    }
}

impl SafetyConfig {
    pub fn validate(&self) -> Result<(), SafetyError> {
        if !(self.d_min > 0.0) || !self.d_min.is_finite() {
            return Err(SafetyError::DMin(self.d_min));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(SafetyError::Epsilon(self.epsilon));
        }
        if self.horizon < 1 {
            return Err(SafetyError::Horizon);
        }
        if self.n_samples < 100 {
            return Err(SafetyError::Samples(self.n_samples));
        }
        if !(self.k_pf >= 0.0) || !self.k_pf.is_finite() {
            return Err(SafetyError::Gain(self.k_pf));
        }
        if let Some(s) = &self.sigma_modes {
            if s.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(SafetyError::Sigma);
            }
        }
        if self.n_radius_samples < 1 {
            return Err(SafetyError::RadiusSamples);
        }
        Ok(())
    }

    /// `σ⁽ⁱ⁾` for mode `i`.
    pub fn sigma(&self, mode: usize, noise: &NoiseModel) -> f64 {
        match &self.sigma_modes {
            Some(s) if !s.is_empty() => s[mode.min(s.len() - 1)],
            _ => noise.position_sigma(),
        }
    }
}

/// Everything the safety routines need to roll agents forward.
#[derive(Debug, Clone, Copy)]
pub struct SafetyEnv<'a> {
    pub lqr: &'a LqrSolution,
    pub workspace: Workspace,
    pub noise: NoiseModel,
    pub goals: &'a GoalSet,
    pub u_max: f64,
}

impl SafetyEnv<'_> {
    fn pursuit(&self, x: &AgentState, goal: Vec2) -> Vec2 {
        saturate(self.lqr.control(x, goal), self.u_max)
    }

    fn step(&self, x: &AgentState, u: Vec2) -> AgentState {
        step_robot(x, u, self.lqr.model(), &self.workspace)
    }

    /// Noise-free pursuit positions `t = 0..=horizon`.
    fn nominal_path(&self, x: &AgentState, goal: Vec2, horizon: usize) -> Vec<Vec2> {
        let mut s = *x;
        let mut path = Vec::with_capacity(horizon + 1);
        path.push(s.position());
        for _ in 0..horizon {
            s = self.step(&s, self.pursuit(&s, goal));
            path.push(s.position());
        }
        path
    }
}

/// `φ_margin = ‖p_R − p_H‖ − margin`.
pub fn barrier(x_r: &AgentState, x_h: &AgentState, margin: f64) -> f64 {
    (x_r.position() - x_h.position()).norm() - margin
}

fn sample_index<R: Rng + ?Sized>(cdf: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>() * cdf[cdf.len() - 1];
    cdf.iter().position(|c| u < *c).unwrap_or(cdf.len() - 1)
}

/// Fraction of `n_samples` rollouts in which the robot (pure pursuit of
/// `theta_r`) and a greedy noisy human (pursuit of a goal drawn from
/// `posterior`, no avoidance) never come closer than `d_min` over `H` steps.
pub fn long_term_safe_prob<R: Rng + ?Sized>(
    x_h: &AgentState,
    x_r: &AgentState,
    theta_r: Vec2,
    posterior: &OverallPosterior,
    cfg: &SafetyConfig,
    env: &SafetyEnv,
    rng: &mut R,
) -> f64 {
    let robot_path = env.nominal_path(x_r, theta_r, cfg.horizon);
    let mut cdf = Vec::with_capacity(posterior.probs().len());
    let mut acc = 0.0;
    for p in posterior.probs() {
        acc += p;
        cdf.push(acc);
    }
    let model = env.lqr.model();
    let mut safe = 0usize;
    for _ in 0..cfg.n_samples {
        let goal = env.goals.get(sample_index(&cdf, rng));
        let mut h = *x_h;
        let mut ok = true;
        for p_r in robot_path.iter().skip(1) {
            h = step_human(&h, env.pursuit(&h, goal), model, &env.noise, &env.workspace, rng);
            if (p_r - h.position()).norm() < cfg.d_min {
                ok = false;
                break;
            }
        }
        if ok {
            safe += 1;
        }
    }
    safe as f64 / cfg.n_samples as f64
}

/// [`long_term_safe_prob`] behind the optional corridor gate: when the
/// robot's nominal path stays more than `gate_radius` from every mode's
/// nominal path the estimate is skipped and 1 returned.
pub fn gated_safe_prob<R: Rng + ?Sized>(
    x_h: &AgentState,
    x_r: &AgentState,
    theta_r: Vec2,
    posterior: &OverallPosterior,
    cfg: &SafetyConfig,
    env: &SafetyEnv,
    rng: &mut R,
) -> f64 {
    if let Some(gate) = cfg.gate_radius {
        let robot = env.nominal_path(x_r, theta_r, cfg.horizon);
        let clear = env.goals.iter().all(|g| {
            let human = env.nominal_path(x_h, *g, cfg.horizon);
            robot.iter().zip(&human).all(|(a, b)| (a - b).norm() > gate)
        });
        if clear {
            return 1.0;
        }
    }
    long_term_safe_prob(x_h, x_r, theta_r, posterior, cfg, env, rng)
}

/// Result of the expanding-radius safe-state search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafeStateSearch {
    pub state: AgentState,
    pub prob: f64,
    pub found: bool,
    pub radius: f64,
}

/// Search disks of radius 1, 2, 3, … around the robot for a zero-velocity
/// state whose long-term safety probability exceeds `1 − ε`.
pub fn find_safe_state<R: Rng + ?Sized>(
    x_h: &AgentState,
    x_r: &AgentState,
    theta_r: Vec2,
    posterior: &OverallPosterior,
    cfg: &SafetyConfig,
    env: &SafetyEnv,
    rng: &mut R,
) -> SafeStateSearch {
    let center = x_r.position();
    let cap = env.workspace.diagonal();
    let mut best = SafeStateSearch { state: *x_r, prob: f64::NEG_INFINITY, found: false, radius: 0.0 };
    let mut radius = 1.0;
    while radius <= cap {
        for _ in 0..cfg.n_radius_samples {
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let rho = radius * rng.random::<f64>().sqrt();
            let p = env.workspace.clamp_point(center + Vec2::new(rho * angle.cos(), rho * angle.sin()));
            let candidate = AgentState::at_rest(p);
            let prob = long_term_safe_prob(x_h, &candidate, theta_r, posterior, cfg, env, rng);
            if prob > best.prob {
                best = SafeStateSearch { state: candidate, prob, found: false, radius };
            }
            if prob > 1.0 - cfg.epsilon {
                return SafeStateSearch { state: candidate, prob, found: true, radius };
            }
        }
        radius += 1.0;
    }
    best
}

/// Inverse-square push of magnitude `k_pf / d²` directed from `repel_point`
/// toward the agent.
pub fn potential_field_control(x: &AgentState, repel_point: Vec2, k_pf: f64) -> Vec2 {
    if k_pf == 0.0 {
        return Vec2::zeros();
    }
    inverse_square_push(x.position(), repel_point, k_pf)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafeControl {
    pub u: Vec2,
    /// Long-term safety probability of the current state.
    pub prob: f64,
    pub intervened: bool,
    pub search: Option<SafeStateSearch>,
}

/// Safety monitor around an arbitrary nominal control: keep `nominal` while
/// the current state is safe enough, otherwise pursue the goal while being
/// pulled toward a safe state (or pushed off the human if none was found).
pub fn monitored_control<R: Rng + ?Sized>(
    nominal: Vec2,
    x_h: &AgentState,
    x_r: &AgentState,
    theta_r: Vec2,
    posterior: &OverallPosterior,
    cfg: &SafetyConfig,
    env: &SafetyEnv,
    rng: &mut R,
) -> SafeControl {
    let prob = gated_safe_prob(x_h, x_r, theta_r, posterior, cfg, env, rng);
    if prob > 1.0 - cfg.epsilon {
        return SafeControl { u: nominal, prob, intervened: false, search: None };
    }
    let search = find_safe_state(x_h, x_r, theta_r, posterior, cfg, env, rng);
    let u = if search.found {
        env.lqr.control(x_r, theta_r) + cfg.k_pf * (search.state.position() - x_r.position())
    } else {
        potential_field_control(x_r, x_h.position(), cfg.k_pf)
    };
    SafeControl { u: saturate(u, env.u_max), prob, intervened: true, search: Some(search) }
}

/// Long-term safe control around pure goal pursuit.
pub fn safe_control<R: Rng + ?Sized>(
    x_h: &AgentState,
    x_r: &AgentState,
    theta_r: Vec2,
    posterior: &OverallPosterior,
    cfg: &SafetyConfig,
    env: &SafetyEnv,
    rng: &mut R,
) -> SafeControl {
    let nominal = env.pursuit(x_r, theta_r);
    monitored_control(nominal, x_h, x_r, theta_r, posterior, cfg, env, rng)
}

/// A robot rollout produced by [`traj_gen`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateTrajectory {
    pub states: Vec<AgentState>,
    pub controls: Vec<Vec2>,
    pub target_goal: usize,
    pub safe: bool,
    /// Synthetic obstacle used for this rollout, if any.
    pub obstacle: Option<Vec2>,
}

/// Nominal (noise-free, greedy pursuit) human positions for every goal.
pub fn human_mode_paths(x_h: &AgentState, horizon: usize, env: &SafetyEnv) -> Vec<Vec<Vec2>> {
    env.goals.iter().map(|g| env.nominal_path(x_h, *g, horizon)).collect()
}

/// Candidate trajectory generation toward goal `theta_r`. One rollout without
/// an obstacle plus one per synthetic obstacle sampled within
/// `obstacle_radius` of the robot; rollouts that come within
/// `d_min + σ⁽ⁱ⁾√t` of any mode's nominal path are discarded.
pub fn traj_gen<R: Rng + ?Sized>(
    x_h: &AgentState,
    x_r: &AgentState,
    theta_r: usize,
    mode_weights: &OverallPosterior,
    cfg: &SafetyConfig,
    env: &SafetyEnv,
    rng: &mut R,
) -> Vec<CandidateTrajectory> {
    let modes = human_mode_paths(x_h, cfg.horizon, env);
    let sigmas: Vec<f64> = (0..modes.len()).map(|i| cfg.sigma(i, &env.noise)).collect();
    let goal = env.goals.get(theta_r);
    let mut obstacles: Vec<Option<Vec2>> = vec![None];
    for _ in 0..cfg.n_obstacles {
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let rho = cfg.obstacle_radius * rng.random::<f64>().sqrt();
        obstacles.push(Some(x_r.position() + Vec2::new(rho * angle.cos(), rho * angle.sin())));
    }
    let clear = |p: Vec2, t: usize| {
        modes
            .iter()
            .zip(&sigmas)
            .all(|(path, sigma)| (p - path[t]).norm() > cfg.d_min + sigma * (t as f64).sqrt())
    };

    let mut out = Vec::new();
    for obstacle in obstacles {
        let mut x = *x_r;
        let mut states = vec![x];
        let mut controls = Vec::with_capacity(cfg.horizon);
        let mut safe = true;
        for t in 0..cfg.horizon {
            if !clear(x.position(), t) {
                safe = false;
                break;
            }
            let mut u = env.lqr.control(&x, goal);
            if let Some(o) = obstacle {
                u += potential_field_control(&x, o, cfg.k_pf);
            }
            for (path, w) in modes.iter().zip(mode_weights.probs()) {
                u += *w * potential_field_control(&x, path[t], cfg.k_pf);
            }
            let u = saturate(u, env.u_max);
            x = env.step(&x, u);
            states.push(x);
            controls.push(u);
        }
        if safe && clear(x.position(), cfg.horizon) {
            out.push(CandidateTrajectory { states, controls, target_goal: theta_r, safe: true, obstacle });
        }
    }
    out
}

/// Inputs of one pipeline tick. Beliefs must already include this tick's
/// observations.
#[derive(Debug, Clone, Copy)]
pub struct PipelineInput<'a> {
    pub x_h: &'a AgentState,
    pub x_r: &'a AgentState,
    pub planner: &'a PlannerState,
    pub cbp: &'a CbpParams,
    pub objective: Objective,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub u: Vec2,
    pub goal: usize,
    pub mode: Mode,
    pub posterior: Vec<f64>,
    /// Surviving candidate trajectories per goal.
    pub candidate_counts: Vec<usize>,
    /// No goal had a surviving trajectory and safe control was used instead.
    pub fallback: bool,
}

/// One tick of the safe control pipeline: conditional belief, overall
/// posterior, candidate trajectories per goal, and the (trajectory, goal)
/// pair minimizing the active objective. Among trajectories of the winning
/// goal the one ending closest to the goal is used.
pub fn pipeline_step<R: Rng + ?Sized>(
    input: &PipelineInput,
    cfg: &SafetyConfig,
    env: &SafetyEnv,
    rng: &mut R,
) -> PipelineOutput {
    let goals = env.goals;
    let planner = input.planner;
    let cond = conditional_belief(&planner.prior_belief, input.x_h, input.cbp, goals);
    let posterior = overall_posterior(&planner.mental_model, &cond);
    let mode = objective_mode(input.objective, planner);

    let candidates: Vec<Vec<CandidateTrajectory>> =
        (0..goals.len()).map(|r| traj_gen(input.x_h, input.x_r, r, &posterior, cfg, env, rng)).collect();
    let candidate_counts: Vec<usize> = candidates.iter().map(Vec::len).collect();
    let feasible: Vec<usize> = (0..goals.len()).filter(|r| candidate_counts[*r] > 0).collect();

    if feasible.is_empty() {
        let all: Vec<usize> = (0..goals.len()).collect();
        let costs = objective_costs(input.objective, mode, &all, &cond, &planner.prior_belief, input.x_r, input.x_h, goals);
        let goal = select_goal(&costs, planner.current_robot_goal, planner.tie_tolerance, input.x_r, goals).unwrap_or(0);
        let sc = safe_control(input.x_h, input.x_r, goals.get(goal), &posterior, cfg, env, rng);
        return PipelineOutput { u: sc.u, goal, mode, posterior: posterior.probs().to_vec(), candidate_counts, fallback: true };
    }

    let costs = objective_costs(input.objective, mode, &feasible, &cond, &planner.prior_belief, input.x_r, input.x_h, goals);
    let held = planner
        .current_robot_goal
        .filter(|g| feasible.contains(g) && planner.holds(input.objective, mode));
    let goal = held.unwrap_or_else(|| {
        select_goal(&costs, planner.current_robot_goal, planner.tie_tolerance, input.x_r, goals).unwrap_or(feasible[0])
    });
    let target = goals.get(goal);
    let best = candidates[goal]
        .iter()
        .min_by(|a, b| {
            let da = (a.states.last().unwrap().position() - target).norm();
            let db = (b.states.last().unwrap().position() - target).norm();
            da.total_cmp(&db)
        })
        .expect("feasible goal has a candidate");
    PipelineOutput {
        u: best.controls[0],
        goal,
        mode,
        posterior: posterior.probs().to_vec(),
        candidate_counts,
        fallback: false,
    }
}
