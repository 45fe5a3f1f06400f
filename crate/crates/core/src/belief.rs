//! Observational Bayesian goal inference for a noisily-rational LQR agent.
//!
//! The action likelihood is a Boltzmann distribution over the LQR Q-function,
//! `p(u | x; θ, β) ∝ exp(β Q(x, u; θ))`. Because `Q` is quadratic in `u` the
//! normalizer has the closed form
//! `exp(−β (x−θ)ᵀP(x−θ)) · √((2π)^m / det(2β (R + BᵀPB)))`,
//! so every update here is exact and runs in the log domain.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{AgentState, LqrSolution, Vec2};

/// Lower bound applied to every belief entry before renormalizing.
pub const PROB_FLOOR: f64 = 1e-9;

const CONTROL_DIM: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BeliefError {
    #[error("rationality coefficient must be positive, got {0}")]
    NonPositiveBeta(f64),
    #[error("goal set must not be empty")]
    EmptyGoalSet,
    #[error("goals {0} and {1} are closer than the minimum separation")]
    GoalsTooClose(usize, usize),
    #[error("distribution has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("distribution entries must be finite, non-negative and sum to a positive value")]
    InvalidDistribution,
    #[error("posterior mass vanished")]
    DegeneratePosterior,
    #[error("beta grid must be non-empty with positive entries")]
    InvalidBetaGrid,
}

/// Ordered set of goal positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalSet {
    goals: Vec<Vec2>,
}

impl GoalSet {
    /// Build a goal set whose pairwise distances are all at least `min_separation`.
    pub fn new(goals: Vec<Vec2>, min_separation: f64) -> Result<Self, BeliefError> {
        if goals.is_empty() {
            return Err(BeliefError::EmptyGoalSet);
        }
        for i in 0..goals.len() {
            for j in i + 1..goals.len() {
                if (goals[i] - goals[j]).norm() < min_separation {
                    return Err(BeliefError::GoalsTooClose(i, j));
                }
            }
        }
        Ok(Self { goals })
    }

    pub fn len(&self) -> usize {
        self.goals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.goals.is_empty()
    }

    pub fn get(&self, i: usize) -> Vec2 {
        self.goals[i]
    }

    pub fn as_slice(&self) -> &[Vec2] {
        &self.goals
    }

    pub fn iter(&self) -> impl Iterator<Item = &Vec2> {
        self.goals.iter()
    }

    /// Move slot `i` to a new position (respawn). Separation is the caller's concern.
    pub fn replace(&mut self, i: usize, goal: Vec2) {
        self.goals[i] = goal;
    }

    /// Index of the goal nearest to `p`, lowest index on ties.
    pub fn nearest(&self, p: Vec2) -> usize {
        self.nearest_excluding(p, None)
    }

    /// Nearest goal to `p` skipping `excluded`. With a single goal the
    /// exclusion is waived.
    pub fn nearest_excluding(&self, p: Vec2, excluded: Option<usize>) -> usize {
        let excluded = if self.goals.len() == 1 { None } else { excluded };
        let mut best = (f64::INFINITY, 0);
        for (i, g) in self.goals.iter().enumerate() {
            if Some(i) == excluded {
                continue;
            }
            let d = (g - p).norm();
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Floor every entry at [`PROB_FLOOR`] and renormalize.
fn floor_normalize(probs: &mut [f64]) {
    for p in probs.iter_mut() {
        *p = p.max(PROB_FLOOR);
    }
    let s: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= s;
    }
}

/// Bayes update in the log domain: `post ∝ prior · exp(loglik)`, then floored.
fn bayes_posterior(prior: &[f64], loglik: &[f64]) -> Result<Vec<f64>, BeliefError> {
    let peak = loglik.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !peak.is_finite() {
        return Err(BeliefError::DegeneratePosterior);
    }
    let mut post: Vec<f64> = prior.iter().zip(loglik).map(|(p, l)| p * (l - peak).exp()).collect();
    let total: f64 = post.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(BeliefError::DegeneratePosterior);
    }
    for p in post.iter_mut() {
        *p /= total;
    }
    floor_normalize(&mut post);
    Ok(post)
}

fn validate_distribution(probs: &[f64]) -> Result<(), BeliefError> {
    let total: f64 = probs.iter().sum();
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) || !(total > 0.0) {
        return Err(BeliefError::InvalidDistribution);
    }
    Ok(())
}

/// Give slot `i` mass `share` and rescale the rest to `1 − share`.
fn reset_slot(probs: &mut [f64], i: usize, share: f64) {
    let rest: f64 = probs.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, p)| p).sum();
    for (j, p) in probs.iter_mut().enumerate() {
        if j == i {
            *p = share;
        } else if rest > 0.0 {
            *p *= (1.0 - share) / rest;
        } else {
            *p = 0.0;
        }
    }
}

/// Probability distribution over goal hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalBelief {
    probs: Vec<f64>,
}

impl GoalBelief {
    pub fn uniform(n: usize) -> Self {
        Self { probs: vec![1.0 / n as f64; n] }
    }

    /// Normalize arbitrary non-negative weights into a belief (with flooring).
    pub fn from_weights(weights: Vec<f64>) -> Result<Self, BeliefError> {
        validate_distribution(&weights)?;
        let total: f64 = weights.iter().sum();
        let mut probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        floor_normalize(&mut probs);
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }

    pub fn max(&self) -> f64 {
        self.probs.iter().copied().fold(0.0, f64::max)
    }

    /// Respawned goal `i` gets mass `1/N`; the rest rescale to `1 − 1/N`.
    pub fn reset_goal(&mut self, i: usize) {
        let share = 1.0 / self.probs.len() as f64;
        reset_slot(&mut self.probs, i, share);
    }

    /// Reorder entries so that entry `k` of the result is entry `perm[k]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self { probs: perm.iter().map(|&i| self.probs[i]).collect() }
    }
}

/// Joint distribution over `(goal, β)` pairs, row-major `N × M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointBelief {
    probs: Vec<f64>,
    beta_grid: Vec<f64>,
}

impl JointBelief {
    pub fn uniform(n_goals: usize, beta_grid: Vec<f64>) -> Result<Self, BeliefError> {
        if beta_grid.is_empty() || beta_grid.iter().any(|b| !(*b > 0.0) || !b.is_finite()) {
            return Err(BeliefError::InvalidBetaGrid);
        }
        if n_goals == 0 {
            return Err(BeliefError::EmptyGoalSet);
        }
        let cells = n_goals * beta_grid.len();
        Ok(Self { probs: vec![1.0 / cells as f64; cells], beta_grid })
    }

    pub fn n_goals(&self) -> usize {
        self.probs.len() / self.beta_grid.len()
    }

    pub fn beta_grid(&self) -> &[f64] {
        &self.beta_grid
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, goal: usize, beta_index: usize) -> f64 {
        self.probs[goal * self.beta_grid.len() + beta_index]
    }

    pub fn row(&self, goal: usize) -> &[f64] {
        let m = self.beta_grid.len();
        &self.probs[goal * m..(goal + 1) * m]
    }

    /// β-marginal: `b(θ) = Σ_β b(θ, β)`.
    pub fn marginal_goals(&self) -> GoalBelief {
        let probs = (0..self.n_goals()).map(|g| self.row(g).iter().sum()).collect();
        GoalBelief { probs }
    }

    /// `b(β | θ)` for one goal, or `None` when the row carries (almost) no mass.
    pub fn beta_given_goal(&self, goal: usize) -> Option<Vec<f64>> {
        let row = self.row(goal);
        let total: f64 = row.iter().sum();
        if total < 1e-12 {
            return None;
        }
        Some(row.iter().map(|p| p / total).collect())
    }

    /// Respawned goal row gets total mass `1/N`, other rows rescale to
    /// `1 − 1/N`. The new row splits its mass over β like the remaining rows
    /// do together, uniformly when they carry no mass.
    pub fn reset_goal(&mut self, goal: usize) {
        let n = self.n_goals();
        let m = self.beta_grid.len();
        let share = 1.0 / n as f64;
        let mut beta_mass = vec![0.0; m];
        for g in (0..n).filter(|g| *g != goal) {
            for (acc, p) in beta_mass.iter_mut().zip(self.row(g)) {
                *acc += p;
            }
        }
        let rest: f64 = beta_mass.iter().sum();
        for g in 0..n {
            for b in 0..m {
                let cell = &mut self.probs[g * m + b];
                if g == goal {
                    *cell = if rest > 0.0 { share * beta_mass[b] / rest } else { share / m as f64 };
                } else if rest > 0.0 {
                    *cell *= (1.0 - share) / rest;
                }
            }
        }
    }
}

/// One observed step of an agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub state: AgentState,
    pub control: Vec2,
    pub partner_state: AgentState,
}

impl Observation {
    pub fn new(state: AgentState, control: Vec2, partner_state: AgentState) -> Self {
        Self { state, control, partner_state }
    }
}

/// `ln p(u | x; θ, β)` under the Boltzmann-LQR model.
pub fn log_action_likelihood(obs: &Observation, goal: Vec2, beta: f64, lqr: &LqrSolution) -> Result<f64, BeliefError> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(BeliefError::NonPositiveBeta(beta));
    }
    let numerator = beta * lqr.q_value(&obs.state, obs.control, goal);
    let det = (2.0 * beta * lqr.hessian()).determinant();
    let log_denominator =
        -beta * lqr.cost_to_go(&obs.state, goal) + 0.5 * (CONTROL_DIM * (2.0 * PI).ln() - det.ln());
    Ok(numerator - log_denominator)
}

/// Density `p(u | x; θ, β)`; see [`log_action_likelihood`].
pub fn action_likelihood(obs: &Observation, goal: Vec2, beta: f64, lqr: &LqrSolution) -> Result<f64, BeliefError> {
    log_action_likelihood(obs, goal, beta, lqr).map(f64::exp)
}

fn check_len(expected: usize, got: usize) -> Result<(), BeliefError> {
    if expected != got {
        return Err(BeliefError::LengthMismatch { expected, got });
    }
    Ok(())
}

/// Bayes update of a goal belief with one observed action at fixed `β`.
pub fn update_goal_belief(
    belief: &GoalBelief,
    obs: &Observation,
    goals: &GoalSet,
    beta: f64,
    lqr: &LqrSolution,
) -> Result<GoalBelief, BeliefError> {
    check_len(goals.len(), belief.len())?;
    let loglik = goals
        .iter()
        .map(|g| log_action_likelihood(obs, *g, beta, lqr))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GoalBelief { probs: bayes_posterior(&belief.probs, &loglik)? })
}

/// Bayes update of the joint `(θ, β)` belief: each cell is weighted by its
/// own likelihood and the whole matrix renormalized.
pub fn update_joint_belief(
    jb: &JointBelief,
    obs: &Observation,
    goals: &GoalSet,
    lqr: &LqrSolution,
) -> Result<JointBelief, BeliefError> {
    check_len(goals.len(), jb.n_goals())?;
    let mut loglik = Vec::with_capacity(jb.probs.len());
    for g in goals.iter() {
        for &beta in &jb.beta_grid {
            loglik.push(log_action_likelihood(obs, *g, beta, lqr)?);
        }
    }
    Ok(JointBelief { probs: bayes_posterior(&jb.probs, &loglik)?, beta_grid: jb.beta_grid.clone() })
}

/// True iff, for every goal, the most probable `β` given that goal is below
/// `delta`. Rows with negligible mass count as uncertain.
pub fn is_human_uncertain(jb: &JointBelief, delta: f64) -> bool {
    (0..jb.n_goals()).all(|g| match jb.beta_given_goal(g) {
        Some(cond) => jb.beta_grid[argmax(&cond)] < delta,
        None => true,
    })
}

/// The robot's model of the human's inference over the robot's goal: the
/// same Bayes update, applied to the robot's own observed motion with the
/// human's rationality `beta_h`.
pub fn mental_model_update(
    belief: &GoalBelief,
    robot_obs: &Observation,
    goals: &GoalSet,
    beta_h: f64,
    lqr: &LqrSolution,
) -> Result<GoalBelief, BeliefError> {
    update_goal_belief(belief, robot_obs, goals, beta_h, lqr)
}
