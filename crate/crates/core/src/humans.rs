//! Simulated human partners: a social-force low-level controller and two
//! goal-selection personalities.

use serde::{Deserialize, Serialize};

use crate::belief::{GoalBelief, GoalSet};
use crate::dynamics::{saturate, AgentState, LqrSolution, Vec2};

/// Separation below which the repulsion direction is undefined.
pub const MIN_REPULSION_DISTANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HumanKind {
    Uncertain,
    Stubborn,
}

impl HumanKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            HumanKind::Uncertain => "uncertain",
            HumanKind::Stubborn => "stubborn",
        }
    }
}

impl std::str::FromStr for HumanKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uncertain" => Ok(HumanKind::Uncertain),
            "stubborn" => Ok(HumanKind::Stubborn),
            other => Err(format!("unknown human kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HumanParams {
    /// Repulsion strength, units³/s².
    pub gamma: f64,
    pub kind: HumanKind,
    /// Belief level at which the uncertain human commits.
    pub confidence_threshold: f64,
    pub u_max: f64,
    /// Rationality the human assumes when inferring the robot's goal.
    pub beta_h: f64,
}

impl Default for HumanParams {
    fn default() -> Self {
        Self { gamma: 2.0, kind: HumanKind::Uncertain, confidence_threshold: 0.4, u_max: 5.0, beta_h: 1.0 }
    }
}

/// Unit vector pointing from `from` to `to` scaled by `strength / d²`.
/// Inside [`MIN_REPULSION_DISTANCE`] the direction falls back to `+x`.
pub(crate) fn inverse_square_push(to: Vec2, from: Vec2, strength: f64) -> Vec2 {
    let diff = to - from;
    let d = diff.norm();
    if d < MIN_REPULSION_DISTANCE {
        Vec2::new(strength / (MIN_REPULSION_DISTANCE * MIN_REPULSION_DISTANCE), 0.0)
    } else {
        diff * (strength / (d * d * d))
    }
}

/// Goal attraction through the LQR gain plus inverse-square repulsion from
/// the robot, saturated at `u_max`.
pub fn social_force_control(x_h: &AgentState, x_r: &AgentState, goal: Vec2, params: &HumanParams, lqr: &LqrSolution) -> Vec2 {
    let attraction = lqr.control(x_h, goal);
    let repulsion = if params.gamma == 0.0 {
        Vec2::zeros()
    } else {
        inverse_square_push(x_h.position(), x_r.position(), params.gamma)
    };
    saturate(attraction + repulsion, params.u_max)
}

/// A goal change of the simulated human.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalChange {
    pub from: usize,
    pub to: usize,
    /// The previous goal was collected, so the change was not a choice.
    pub forced: bool,
}

/// Goal-selection state of a simulated human.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanMind {
    pub current_goal: Option<usize>,
    pub belief_over_robot: GoalBelief,
    /// Number of voluntary goal changes.
    pub change_count: usize,
    last_committed: Option<usize>,
    last_collected: bool,
}

impl HumanMind {
    pub fn new(n_goals: usize) -> Self {
        Self {
            current_goal: None,
            belief_over_robot: GoalBelief::uniform(n_goals),
            change_count: 0,
            last_committed: None,
            last_collected: false,
        }
    }

    /// Goal `i` was collected and respawned. A human pursuing it loses its goal
    /// and the next commitment is recorded as forced.
    pub fn goal_collected(&mut self, i: usize) {
        self.belief_over_robot.reset_goal(i);
        if self.last_committed == Some(i) {
            self.last_collected = true;
            if self.current_goal == Some(i) {
                self.current_goal = None;
            }
        }
    }

    /// Apply a selection. Returns a change record when the committed goal
    /// differs from the last committed one (gaps of `None` are skipped), or
    /// when recommitting after the previous goal was collected.
    pub fn apply_selection(&mut self, selection: Option<usize>) -> Option<GoalChange> {
        self.current_goal = selection;
        let to = selection?;
        let change = match self.last_committed {
            Some(from) if self.last_collected => Some(GoalChange { from, to, forced: true }),
            Some(from) if from != to => Some(GoalChange { from, to, forced: false }),
            _ => None,
        };
        if let Some(c) = change {
            if !c.forced {
                self.change_count += 1;
            }
        }
        self.last_committed = Some(to);
        self.last_collected = false;
        change
    }
}

/// Uncertain personality: hesitate until the belief over the robot's goal
/// reaches the threshold, then take the nearest goal that is not the robot's
/// most likely goal.
pub fn uncertain_select(mind: &HumanMind, x_h: &AgentState, goals: &GoalSet, confidence_threshold: f64) -> Option<usize> {
    if mind.belief_over_robot.max() < confidence_threshold {
        return None;
    }
    Some(goals.nearest_excluding(x_h.position(), Some(mind.belief_over_robot.argmax())))
}

/// Stubborn personality: keep the current goal, otherwise take the nearest.
pub fn stubborn_select(mind: &HumanMind, x_h: &AgentState, goals: &GoalSet) -> usize {
    match mind.current_goal {
        Some(g) if g < goals.len() => g,
        _ => goals.nearest(x_h.position()),
    }
}

/// Where the human is steering this tick: its goal, or its own position
/// while hesitating.
pub fn steering_target(goal: Option<usize>, x_h: &AgentState, goals: &GoalSet) -> Vec2 {
    goal.map(|g| goals.get(g)).unwrap_or_else(|| x_h.position())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::make_double_integrator;

    fn lqr() -> LqrSolution {
        LqrSolution::from_diagonal(&make_double_integrator(0.1).unwrap(), [1.0; 4], [1.0; 2]).unwrap()
    }

    #[test]
    fn no_repulsion_is_pure_lqr() {
        let lqr = lqr();
        let p = HumanParams { gamma: 0.0, u_max: 1e9, ..Default::default() };
        let x = AgentState::new(2.0, 0.1, 3.0, 0.0);
        let g = Vec2::new(4.0, 4.0);
        let u = social_force_control(&x, &AgentState::at_rest(Vec2::new(2.5, 3.0)), g, &p, &lqr);
        assert_eq!(u, lqr.control(&x, g));
    }

    #[test]
    fn repulsion_magnitude_is_inverse_square() {
        let lqr = lqr();
        let p = HumanParams::default();
        let g = Vec2::new(5.0, 5.0);
        let x = AgentState::at_rest(g);
        let d = 2.0;
        let u = social_force_control(&x, &AgentState::at_rest(g + Vec2::new(d, 0.0)), g, &p, &lqr);
        assert!((u.norm() - p.gamma / (d * d)).abs() < 1e-12);
        assert!(u.x < 0.0);
        let far = social_force_control(&x, &AgentState::at_rest(g + Vec2::new(2.0 * d, 0.0)), g, &p, &lqr);
        assert!((u.norm() / far.norm() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn coincident_agents_use_fallback_direction() {
        let lqr = lqr();
        let p = HumanParams::default();
        let g = Vec2::new(5.0, 5.0);
        let u = social_force_control(&AgentState::at_rest(g), &AgentState::at_rest(g), g, &p, &lqr);
        assert!((u - Vec2::new(p.u_max, 0.0)).norm() < 1e-9);
    }

    fn line_goals() -> GoalSet {
        GoalSet::new(vec![Vec2::new(1.0, 1.0), Vec2::new(4.0, 1.0), Vec2::new(9.0, 1.0)], 1.0).unwrap()
    }

    #[test]
    fn uncertain_waits_below_threshold() {
        let goals = GoalSet::new(
            vec![Vec2::new(1.0, 1.0), Vec2::new(9.0, 1.0), Vec2::new(1.0, 9.0), Vec2::new(9.0, 9.0)],
            1.0,
        )
        .unwrap();
        let mind = HumanMind::new(4);
        assert_eq!(uncertain_select(&mind, &AgentState::default(), &goals, 0.4), None);
    }

    #[test]
    fn uncertain_avoids_robot_goal() {
        let goals = line_goals();
        let mut mind = HumanMind::new(3);
        mind.belief_over_robot = GoalBelief::from_weights(vec![0.5, 0.3, 0.2]).unwrap();
        let x = AgentState::at_rest(Vec2::new(1.5, 1.0));
        assert_eq!(goals.nearest(x.position()), 0);
        assert_eq!(uncertain_select(&mind, &x, &goals, 0.4), Some(1));

        mind.belief_over_robot = GoalBelief::from_weights(vec![0.1, 0.2, 0.7]).unwrap();
        assert_eq!(uncertain_select(&mind, &x, &goals, 0.4), Some(0));
    }

    #[test]
    fn stubborn_keeps_goal_until_collected() {
        let goals = line_goals();
        let mut mind = HumanMind::new(3);
        let x = AgentState::at_rest(Vec2::new(8.0, 1.0));
        let g = stubborn_select(&mind, &x, &goals);
        assert_eq!(g, 2);
        assert_eq!(mind.apply_selection(Some(g)), None);
        let moved = AgentState::at_rest(Vec2::new(1.2, 1.0));
        assert_eq!(stubborn_select(&mind, &moved, &goals), 2);
        assert_eq!(mind.change_count, 0);

        mind.goal_collected(2);
        let g = stubborn_select(&mind, &moved, &goals);
        assert_eq!(g, 0);
        assert_eq!(mind.apply_selection(Some(g)), Some(GoalChange { from: 2, to: 0, forced: true }));
        assert_eq!(mind.change_count, 0);
    }

    #[test]
    fn voluntary_changes_counted_across_hesitation() {
        let mut mind = HumanMind::new(3);
        assert_eq!(mind.apply_selection(Some(1)), None);
        assert_eq!(mind.apply_selection(None), None);
        assert_eq!(mind.apply_selection(Some(1)), None);
        assert_eq!(mind.apply_selection(None), None);
        assert_eq!(mind.apply_selection(Some(2)), Some(GoalChange { from: 1, to: 2, forced: false }));
        assert_eq!(mind.change_count, 1);
    }
}
