//! Robot goal selection: baselines, the conditional objectives and the
//! courtesy/influence switch.

use serde::{Deserialize, Serialize};

use crate::belief::{argmax, is_human_uncertain, BeliefError, GoalBelief, GoalSet, JointBelief, PROB_FLOOR};
use crate::cbp::{conditional_belief, CbpParams, ConditionalBelief};
use crate::dynamics::{saturate, AgentState, LqrSolution, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobotKind {
    Naive,
    Reactive,
    ProactiveModel,
    ProactiveSafe,
}

impl RobotKind {
    pub const ALL: [RobotKind; 4] = [RobotKind::Naive, RobotKind::Reactive, RobotKind::ProactiveModel, RobotKind::ProactiveSafe];

    pub fn as_str(&self) -> &'static str {
        match self {
            RobotKind::Naive => "naive",
            RobotKind::Reactive => "reactive",
            RobotKind::ProactiveModel => "proactive_model",
            RobotKind::ProactiveSafe => "proactive_safe",
        }
    }

    pub fn is_proactive(&self) -> bool {
        matches!(self, RobotKind::ProactiveModel | RobotKind::ProactiveSafe)
    }
}

impl std::str::FromStr for RobotKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "naive" => Ok(RobotKind::Naive),
            "reactive" => Ok(RobotKind::Reactive),
            "proactive_model" | "proactive" => Ok(RobotKind::ProactiveModel),
            "proactive_safe" => Ok(RobotKind::ProactiveSafe),
            other => Err(format!("unknown robot kind `{other}`")),
        }
    }
}

/// Objective a proactive robot minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Kl,
    Courtesy,
    Influence,
    #[default]
    Switching,
}

impl std::str::FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "kl" => Ok(Objective::Kl),
            "courtesy" => Ok(Objective::Courtesy),
            "influence" => Ok(Objective::Influence),
            "switching" => Ok(Objective::Switching),
            other => Err(format!("unknown objective `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Courtesy,
    Influence,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Courtesy => "courtesy",
            Mode::Influence => "influence",
        }
    }
}

/// Nearest goal to the robot.
pub fn naive_goal(x_r: &AgentState, goals: &GoalSet) -> usize {
    goals.nearest(x_r.position())
}

/// Nearest goal to the robot that is not the human's inferred goal.
pub fn reactive_goal(x_r: &AgentState, goals: &GoalSet, prior: &GoalBelief) -> usize {
    goals.nearest_excluding(x_r.position(), Some(prior.argmax()))
}

/// `D_KL(cond[θ_R] ‖ prior)` with the conditional row floored.
pub fn kl_cost(theta_r: usize, cond: &ConditionalBelief, prior: &GoalBelief) -> f64 {
    cond.row(theta_r)
        .iter()
        .zip(prior.probs())
        .map(|(c, p)| {
            let c = c.max(PROB_FLOOR);
            c * (c / p.max(PROB_FLOOR)).ln()
        })
        .sum()
}

/// `−b(θ_post = θ̂_H | θ_R)` where `θ̂_H` is the prior argmax.
pub fn courtesy_cost(theta_r: usize, cond: &ConditionalBelief, prior: &GoalBelief) -> f64 {
    -cond.get(theta_r, prior.argmax())
}

/// `ln(1 + J_c) = ln b(θ_post ≠ θ̂_H | θ_R)`: a monotone transform of
/// [`courtesy_cost`] with the same argmin. Goal selection compares courtesy
/// in this form so that the tie tolerance is a ratio of change
/// probabilities rather than a difference of near-one keep probabilities.
pub fn courtesy_log_change(theta_r: usize, cond: &ConditionalBelief, prior: &GoalBelief) -> f64 {
    let keep = prior.argmax();
    let change: f64 = cond.row(theta_r).iter().enumerate().filter(|(h, _)| *h != keep).map(|(_, p)| p).sum();
    change.max(f64::MIN_POSITIVE).ln()
}

/// Team travel `‖p_R − θ_R‖ + ‖p_H − θ̂_H‖`, with `θ̂_H` the argmax of the
/// conditional row for `θ_R`.
pub fn influence_cost(theta_r: usize, cond: &ConditionalBelief, x_r: &AgentState, x_h: &AgentState, goals: &GoalSet) -> f64 {
    let predicted = argmax(cond.row(theta_r));
    (x_r.position() - goals.get(theta_r)).norm() + (x_h.position() - goals.get(predicted)).norm()
}

/// Argmin over candidate indices: the incumbent wins if it ties the minimum,
/// otherwise the lowest index does.
pub fn select_min(costs: &[(usize, f64)], incumbent: Option<usize>) -> Option<usize> {
    let best = costs.iter().map(|(_, c)| *c).fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return costs.first().map(|(i, _)| *i);
    }
    if let Some(inc) = incumbent {
        if costs.iter().any(|(i, c)| *i == inc && *c <= best) {
            return Some(inc);
        }
    }
    costs.iter().find(|(_, c)| *c <= best).map(|(i, _)| *i)
}

/// Argmin with a tolerance band: candidates within `tolerance` of the
/// minimum count as tied. The incumbent wins a tie, otherwise the tied goal
/// nearest the robot does (lowest index on equal distance).
pub fn select_goal(
    costs: &[(usize, f64)],
    incumbent: Option<usize>,
    tolerance: f64,
    x_r: &AgentState,
    goals: &GoalSet,
) -> Option<usize> {
    let best = costs.iter().map(|(_, c)| *c).fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return costs.first().map(|(i, _)| *i);
    }
    let worst = costs.iter().map(|(_, c)| *c).filter(|c| c.is_finite()).fold(best, f64::max);
    let band = tolerance * (worst - best);
    let tied: Vec<usize> = costs.iter().filter(|(_, c)| *c <= best + band).map(|(i, _)| *i).collect();
    if let Some(inc) = incumbent {
        if tied.contains(&inc) {
            return Some(inc);
        }
    }
    let p = x_r.position();
    tied.into_iter().min_by(|a, b| (goals.get(*a) - p).norm().total_cmp(&(goals.get(*b) - p).norm()).then(a.cmp(b)))
}

/// Robot-side beliefs and goal-selection state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerState {
    /// β-marginal of `joint_belief`, refreshed by [`PlannerState::set_joint`].
    pub prior_belief: GoalBelief,
    pub joint_belief: JointBelief,
    pub mental_model: GoalBelief,
    pub current_robot_goal: Option<usize>,
    pub mode: Mode,
    pub delta: f64,
    /// Candidates within this fraction of the spread between the best and
    /// worst selection key count as tied with the best.
    pub tie_tolerance: f64,
    /// Keep the current goal while the mode and the inferred human goal are
    /// unchanged. Not applied to the KL objective.
    #[serde(default)]
    pub hold_decision: bool,
    /// Mode and inferred human goal at the last proactive decision.
    #[serde(default)]
    pub anchor: Option<(Mode, usize)>,
}

impl PlannerState {
    pub fn new(n_goals: usize, beta_grid: Vec<f64>, delta: f64) -> Result<Self, BeliefError> {
        let joint = JointBelief::uniform(n_goals, beta_grid)?;
        let mut state = Self {
            prior_belief: joint.marginal_goals(),
            joint_belief: joint,
            mental_model: GoalBelief::uniform(n_goals),
            current_robot_goal: None,
            mode: Mode::Courtesy,
            delta,
            tie_tolerance: 0.0,
            hold_decision: false,
            anchor: None,
        };
        state.mode = state.switch_mode();
        Ok(state)
    }

    pub fn set_joint(&mut self, joint: JointBelief) {
        self.prior_belief = joint.marginal_goals();
        self.joint_belief = joint;
    }

    /// Mode implied by the current joint belief and `delta`.
    pub fn switch_mode(&self) -> Mode {
        if is_human_uncertain(&self.joint_belief, self.delta) {
            Mode::Influence
        } else {
            Mode::Courtesy
        }
    }

    /// Whether the last decision stands: holding is enabled, the objective is
    /// not KL, and neither the mode nor the inferred human goal has changed.
    pub fn holds(&self, objective: Objective, mode: Mode) -> bool {
        self.hold_decision && objective != Objective::Kl && self.anchor == Some((mode, self.prior_belief.argmax()))
    }

    /// Goal `i` was respawned: reset its slot in every belief.
    pub fn goal_collected(&mut self, i: usize) {
        let mut joint = self.joint_belief.clone();
        joint.reset_goal(i);
        self.set_joint(joint);
        self.mental_model.reset_goal(i);
        if self.current_robot_goal == Some(i) {
            self.current_robot_goal = None;
        }
    }
}

/// Mode used for a given objective; only `Switching` consults the belief.
pub fn objective_mode(objective: Objective, state: &PlannerState) -> Mode {
    match objective {
        Objective::Kl | Objective::Courtesy => Mode::Courtesy,
        Objective::Influence => Mode::Influence,
        Objective::Switching => state.switch_mode(),
    }
}

/// Selection key of every goal in `candidates`: the KL and influence costs
/// as they are, courtesy as [`courtesy_log_change`].
pub fn objective_costs(
    objective: Objective,
    mode: Mode,
    candidates: &[usize],
    cond: &ConditionalBelief,
    prior: &GoalBelief,
    x_r: &AgentState,
    x_h: &AgentState,
    goals: &GoalSet,
) -> Vec<(usize, f64)> {
    candidates
        .iter()
        .map(|&r| {
            let c = match (objective, mode) {
                (Objective::Kl, _) => kl_cost(r, cond, prior),
                (_, Mode::Influence) => influence_cost(r, cond, x_r, x_h, goals),
                (_, Mode::Courtesy) => courtesy_log_change(r, cond, prior),
            };
            (r, c)
        })
        .collect()
}

/// Proactive goal choice. Returns the goal, the active mode and the
/// conditional belief it was computed from.
pub fn proactive_goal(
    state: &PlannerState,
    x_r: &AgentState,
    x_h: &AgentState,
    goals: &GoalSet,
    params: &CbpParams,
    objective: Objective,
) -> (usize, Mode, ConditionalBelief) {
    let cond = conditional_belief(&state.prior_belief, x_h, params, goals);
    let mode = objective_mode(objective, state);
    if let Some(g) = state.current_robot_goal.filter(|_| state.holds(objective, mode)) {
        return (g, mode, cond);
    }
    let candidates: Vec<usize> = (0..goals.len()).collect();
    let costs = objective_costs(objective, mode, &candidates, &cond, &state.prior_belief, x_r, x_h, goals);
    let goal = select_goal(&costs, state.current_robot_goal, state.tie_tolerance, x_r, goals).unwrap_or(0);
    (goal, mode, cond)
}

/// LQR regulation toward the lifted goal, saturated at `u_max`.
pub fn goal_pursuit_control(x_r: &AgentState, goal: Vec2, lqr: &LqrSolution, u_max: f64) -> Vec2 {
    saturate(lqr.control(x_r, goal), u_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::make_double_integrator;

    fn lqr() -> LqrSolution {
        LqrSolution::from_diagonal(&make_double_integrator(0.1).unwrap(), [1.0; 4], [1.0; 2]).unwrap()
    }

    #[test]
    fn naive_examples() {
        let goals = GoalSet::new(vec![Vec2::new(1.0, 0.0), Vec2::new(5.0, 5.0)], 1.0).unwrap();
        assert_eq!(naive_goal(&AgentState::default(), &goals), 0);
        let tied = GoalSet::new(vec![Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)], 1.0).unwrap();
        assert_eq!(naive_goal(&AgentState::default(), &tied), 0);
        let single = GoalSet::new(vec![Vec2::new(3.0, 3.0)], 1.0).unwrap();
        assert_eq!(naive_goal(&AgentState::default(), &single), 0);
    }

    #[test]
    fn reactive_examples() {
        let goals = GoalSet::new(vec![Vec2::new(1.0, 0.0), Vec2::new(3.0, 0.0), Vec2::new(9.0, 0.0)], 1.0).unwrap();
        let x = AgentState::default();
        let on_nearest = GoalBelief::from_weights(vec![0.8, 0.1, 0.1]).unwrap();
        assert_eq!(reactive_goal(&x, &goals, &on_nearest), 1);
        assert_eq!(reactive_goal(&x, &goals, &GoalBelief::uniform(3)), 1);
        let far = GoalBelief::from_weights(vec![0.1, 0.1, 0.8]).unwrap();
        assert_eq!(reactive_goal(&x, &goals, &far), naive_goal(&x, &goals));
    }

    #[test]
    fn kl_examples() {
        let prior = GoalBelief::from_weights(vec![0.9, 0.1]).unwrap();
        let same = ConditionalBelief::from_rows(vec![prior.probs().to_vec()]);
        assert!(kl_cost(0, &same, &prior).abs() < 1e-15);
        let cond = ConditionalBelief::from_rows(vec![vec![0.5, 0.5]]);
        let expected = 0.5 * (5.0_f64 / 9.0).ln() + 0.5 * 5.0_f64.ln();
        assert!((kl_cost(0, &cond, &prior) - expected).abs() < 1e-8);
        assert!((expected - 0.5108).abs() < 1e-4);
    }

    #[test]
    fn courtesy_examples() {
        let prior = GoalBelief::from_weights(vec![0.0, 1.0]).unwrap();
        let cond = ConditionalBelief::from_rows(vec![vec![0.1, 0.9], vec![0.7, 0.3]]);
        assert!(courtesy_cost(0, &cond, &prior) < courtesy_cost(1, &cond, &prior));
        let uniform = ConditionalBelief::from_rows(vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
        assert_eq!(courtesy_cost(0, &uniform, &prior), courtesy_cost(1, &uniform, &prior));
    }

    #[test]
    fn influence_examples() {
        // Robot next to goal 0, human next to goal 2, cond predicts the human's goal.
        let goals = GoalSet::new(vec![Vec2::new(1.0, 1.0), Vec2::new(5.0, 9.0), Vec2::new(9.0, 1.0)], 1.0).unwrap();
        let x_r = AgentState::at_rest(Vec2::new(1.5, 1.0));
        let x_h = AgentState::at_rest(Vec2::new(8.5, 1.0));
        let cond = ConditionalBelief::from_rows(vec![vec![0.0, 0.1, 0.9], vec![0.1, 0.1, 0.8], vec![0.6, 0.3, 0.1]]);
        let costs: Vec<f64> = (0..3).map(|r| influence_cost(r, &cond, &x_r, &x_h, &goals)).collect();
        assert!((costs[0] - 1.0).abs() < 1e-12);
        assert!(costs[1] > costs[0] && costs[2] > costs[0]);

        let single = GoalSet::new(vec![Vec2::new(3.0, 4.0)], 1.0).unwrap();
        let cond1 = ConditionalBelief::from_rows(vec![vec![1.0]]);
        let c = influence_cost(0, &cond1, &AgentState::default(), &AgentState::at_rest(Vec2::new(3.0, 0.0)), &single);
        assert!((c - 9.0).abs() < 1e-12);
        let at = influence_cost(0, &cond1, &AgentState::at_rest(Vec2::new(3.0, 4.0)), &AgentState::at_rest(Vec2::new(3.0, 4.0)), &single);
        assert_eq!(at, 0.0);
    }

    #[test]
    fn ties_prefer_incumbent_then_lowest_index() {
        let costs = vec![(0, 1.0), (1, 0.5), (2, 0.5)];
        assert_eq!(select_min(&costs, Some(2)), Some(2));
        assert_eq!(select_min(&costs, Some(0)), Some(1));
        assert_eq!(select_min(&costs, None), Some(1));
    }

    #[test]
    fn tie_band_is_relative_to_spread() {
        let goals = GoalSet::new(vec![Vec2::new(9.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(5.0, 0.0)], 1.0).unwrap();
        let x = AgentState::default();
        let costs = vec![(0, 0.0), (1, 0.5), (2, 1.0)];
        assert_eq!(select_goal(&costs, None, 0.0, &x, &goals), Some(0));
        // Band 0.6 of spread 1.0 takes in goal 1, which is nearer the robot.
        assert_eq!(select_goal(&costs, None, 0.6, &x, &goals), Some(1));
        assert_eq!(select_goal(&costs, Some(0), 0.6, &x, &goals), Some(0));
        assert_eq!(select_goal(&costs, Some(2), 0.6, &x, &goals), Some(1));
        let scaled: Vec<(usize, f64)> = costs.iter().map(|(i, c)| (*i, 100.0 * c)).collect();
        assert_eq!(select_goal(&scaled, None, 0.6, &x, &goals), Some(1));
    }

    #[test]
    fn held_decision_until_anchor_moves() {
        let goals = GoalSet::new(vec![Vec2::new(1.0, 1.0), Vec2::new(9.0, 9.0), Vec2::new(1.0, 9.0)], 1.0).unwrap();
        let mut state = PlannerState::new(3, vec![0.05, 0.5, 5.0], 0.5).unwrap();
        state.hold_decision = true;
        state.current_robot_goal = Some(2);
        let h_hat = state.prior_belief.argmax();
        state.anchor = Some((Mode::Courtesy, h_hat));
        let x = AgentState::at_rest(Vec2::new(5.0, 5.0));
        assert!(state.holds(Objective::Courtesy, Mode::Courtesy));
        assert!(!state.holds(Objective::Kl, Mode::Courtesy));
        assert!(!state.holds(Objective::Switching, Mode::Influence));
        let (g, _, _) = proactive_goal(&state, &x, &x, &goals, &CbpParams::default(), Objective::Courtesy);
        assert_eq!(g, 2);
        state.anchor = Some((Mode::Courtesy, (h_hat + 1) % 3));
        assert!(!state.holds(Objective::Courtesy, Mode::Courtesy));
        state.hold_decision = false;
        state.anchor = Some((Mode::Courtesy, h_hat));
        assert!(!state.holds(Objective::Courtesy, Mode::Courtesy));
    }

    #[test]
    fn mode_follows_joint_belief() {
        let mut state = PlannerState::new(2, vec![0.05, 0.5, 5.0], 0.5).unwrap();
        assert_eq!(state.switch_mode(), Mode::Influence);
        let goals = GoalSet::new(vec![Vec2::new(1.0, 1.0), Vec2::new(9.0, 9.0)], 1.0).unwrap();
        let lqr = lqr();
        let mut x = AgentState::at_rest(Vec2::new(5.0, 4.0));
        for _ in 0..30 {
            let u = lqr.control(&x, goals.get(1));
            let obs = crate::belief::Observation::new(x, u, AgentState::default());
            let jb = crate::belief::update_joint_belief(&state.joint_belief, &obs, &goals, &lqr).unwrap();
            state.set_joint(jb);
            x = lqr.model().propagate(&x, u);
        }
        assert_eq!(state.switch_mode(), Mode::Courtesy);
        let (_, mode, _) = proactive_goal(&state, &AgentState::default(), &x, &goals, &CbpParams::default(), Objective::Switching);
        assert_eq!(mode, Mode::Courtesy);
    }

    #[test]
    fn pursuit_control_examples() {
        let lqr = lqr();
        let g = Vec2::new(4.0, 4.0);
        assert_eq!(goal_pursuit_control(&AgentState::at_rest(g), g, &lqr, 5.0), Vec2::zeros());
        let u = goal_pursuit_control(&AgentState::default(), Vec2::new(10.0, 10.0), &lqr, 5.0);
        assert!((u.norm() - 5.0).abs() < 1e-12);
        assert!((u.x - u.y).abs() < 1e-12);
    }
}
