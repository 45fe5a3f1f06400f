//! Model-based conditional behavior prediction.
//!
//! The human's posterior goal given a candidate robot goal is a softmax over
//! a hand-designed score, mixed over the observational prior:
//!
//! `b(θ_post | θ_R) = Σ_{θ_prior} softmax_h(−β_cbp · s(h, θ_R; x_H, θ_prior)) · b(θ_prior)`

use serde::{Deserialize, Serialize};

use crate::belief::{GoalBelief, GoalSet};
use crate::dynamics::{AgentState, Vec2};

/// Score weights and inverse temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CbpParams {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub beta_cbp: f64,
}

impl Default for CbpParams {
    fn default() -> Self {
        Self { w1: 2.0, w2: 0.9, w3: 2.0, beta_cbp: 1.0 }
    }
}

impl CbpParams {
    pub fn is_valid(&self) -> bool {
        [self.w1, self.w2, self.w3, self.beta_cbp].iter().all(|v| v.is_finite()) && self.beta_cbp >= 0.0
    }
}

/// `s = w₁‖p_H − θ_H‖ − w₂‖θ_H − θ_R‖ + w₃‖θ_H − θ_prior‖`. Lower is more likely.
pub fn score(theta_h: Vec2, theta_r: Vec2, x_h: &AgentState, theta_prior: Vec2, params: &CbpParams) -> f64 {
    params.w1 * (x_h.position() - theta_h).norm() - params.w2 * (theta_h - theta_r).norm()
        + params.w3 * (theta_h - theta_prior).norm()
}

/// Max-shifted softmax of `−β · scores`.
fn softmax_neg(scores: &[f64], beta: f64) -> Vec<f64> {
    let logits: Vec<f64> = scores.iter().map(|s| -beta * s).collect();
    let peak = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|l| (l - peak).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// `p(θ_post = h | θ_prior, θ_R)` for every goal `h`.
pub fn transition_dist(theta_prior: usize, theta_r: usize, x_h: &AgentState, params: &CbpParams, goals: &GoalSet) -> Vec<f64> {
    let prior = goals.get(theta_prior);
    let robot = goals.get(theta_r);
    let scores: Vec<f64> = goals.iter().map(|h| score(*h, robot, x_h, prior, params)).collect();
    softmax_neg(&scores, params.beta_cbp)
}

/// Row-stochastic `N × N` matrix `cond[r][h] = b(θ_post = h | θ_R = r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalBelief {
    rows: Vec<Vec<f64>>,
}

impl ConditionalBelief {
    /// Build from explicit rows. Rows are taken as given (used for hand-made cases).
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, robot_goal: usize) -> &[f64] {
        &self.rows[robot_goal]
    }

    pub fn get(&self, robot_goal: usize, human_goal: usize) -> f64 {
        self.rows[robot_goal][human_goal]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

/// Mix the transition distribution over the prior for every candidate robot goal.
pub fn conditional_belief(prior: &GoalBelief, x_h: &AgentState, params: &CbpParams, goals: &GoalSet) -> ConditionalBelief {
    let n = goals.len();
    let rows = (0..n)
        .map(|r| {
            let mut row = vec![0.0; n];
            for (k, &w) in prior.probs().iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for (acc, p) in row.iter_mut().zip(transition_dist(k, r, x_h, params, goals)) {
                    *acc += w * p;
                }
            }
            row
        })
        .collect();
    ConditionalBelief { rows }
}

/// Distribution over the human's posterior goal after marginalizing the
/// robot-goal variable through the mental model. The joint
/// `ĥ(r) · cond[r][h]` is retained for callers that sample pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallPosterior {
    probs: Vec<f64>,
    joint: Vec<Vec<f64>>,
}

impl OverallPosterior {
    /// Build directly from a distribution over human goals (no joint retained).
    pub fn from_probs(probs: Vec<f64>) -> Self {
        Self { probs, joint: Vec::new() }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn joint(&self) -> &[Vec<f64>] {
        &self.joint
    }
}

pub fn overall_posterior(mental_model: &GoalBelief, cond: &ConditionalBelief) -> OverallPosterior {
    let n = cond.len();
    let joint: Vec<Vec<f64>> = (0..n)
        .map(|r| cond.row(r).iter().map(|p| mental_model.probs()[r] * p).collect())
        .collect();
    let mut probs = vec![0.0; n];
    for row in &joint {
        for (acc, p) in probs.iter_mut().zip(row) {
            *acc += p;
        }
    }
    OverallPosterior { probs, joint }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn goals3() -> GoalSet {
        GoalSet::new(vec![Vec2::new(1.0, 2.0), Vec2::new(5.0, 8.0), Vec2::new(9.0, 3.0)], 1.0).unwrap()
    }

    #[test]
    fn score_examples() {
        let p = CbpParams::default();
        let x = AgentState::at_rest(Vec2::new(2.0, 2.0));
        let r = Vec2::new(5.0, 6.0);
        let d = (r - x.position()).norm();
        assert!((score(x.position(), r, &x, x.position(), &p) + p.w2 * d).abs() < 1e-12);

        let g = Vec2::new(3.0, 4.0);
        assert_eq!(score(g, g, &AgentState::default(), g, &p), 10.0);

        let zero = CbpParams { w1: 0.0, w2: 0.0, w3: 0.0, beta_cbp: 1.0 };
        assert_eq!(score(g, r, &x, Vec2::new(9.0, 9.0), &zero), 0.0);
    }

    #[test]
    fn zero_temperature_is_uniform() {
        let p = CbpParams { beta_cbp: 0.0, ..Default::default() };
        let x = AgentState::at_rest(Vec2::new(4.0, 4.0));
        for v in transition_dist(0, 2, &x, &p, &goals3()) {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
        let prior = GoalBelief::from_weights(vec![0.7, 0.2, 0.1]).unwrap();
        let cond = conditional_belief(&prior, &x, &p, &goals3());
        for row in cond.rows() {
            for v in row {
                assert!((v - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn large_temperature_is_argmin() {
        let p = CbpParams { beta_cbp: 1e3, ..Default::default() };
        let goals = goals3();
        let x = AgentState::at_rest(Vec2::new(4.0, 4.0));
        let scores: Vec<f64> = goals.iter().map(|h| score(*h, goals.get(1), &x, goals.get(0), &p)).collect();
        let best = (0..3).min_by(|a, b| scores[*a].total_cmp(&scores[*b])).unwrap();
        let dist = transition_dist(0, 1, &x, &p, &goals);
        assert!((dist[best] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn heavy_prior_weight_preserves_prior() {
        let p = CbpParams { w1: 0.0, w2: 0.0, w3: 1e3, beta_cbp: 1.0 };
        let x = AgentState::at_rest(Vec2::new(4.0, 4.0));
        for prior in 0..3 {
            assert!(transition_dist(prior, 1, &x, &p, &goals3())[prior] >= 0.99);
        }
    }

    #[test]
    fn one_hot_prior_gives_transition_rows() {
        let p = CbpParams::default();
        let x = AgentState::at_rest(Vec2::new(4.0, 4.0));
        let prior = GoalBelief::from_weights(vec![0.0, 1.0, 0.0]).unwrap();
        let cond = conditional_belief(&prior, &x, &p, &goals3());
        for r in 0..3 {
            let t = transition_dist(1, r, &x, &p, &goals3());
            for h in 0..3 {
                assert!((cond.get(r, h) - t[h]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn posterior_examples() {
        let cond = ConditionalBelief::from_rows(vec![vec![0.8, 0.2], vec![0.4, 0.6]]);
        let post = overall_posterior(&GoalBelief::uniform(2), &cond);
        assert!((post.probs()[0] - 0.6).abs() < 1e-15);
        assert!((post.probs()[1] - 0.4).abs() < 1e-15);

        let one_hot = GoalBelief::from_weights(vec![0.0, 1.0]).unwrap();
        let post = overall_posterior(&one_hot, &cond);
        assert!((post.probs()[1] - 0.6).abs() < 1e-8);

        let same = ConditionalBelief::from_rows(vec![vec![0.3, 0.7], vec![0.3, 0.7]]);
        let post = overall_posterior(&GoalBelief::from_weights(vec![0.9, 0.1]).unwrap(), &same);
        assert!((post.probs()[0] - 0.3).abs() < 1e-15);
    }
}
