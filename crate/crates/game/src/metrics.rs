//! Per-session metrics, reduced from the episode log alone.

use std::collections::BTreeMap;

use hrc_core::dynamics::Vec2;
use hrc_sim::{Agent, EpisodeLog, Event};
use serde::{Deserialize, Serialize};

use crate::protocol::EndMetrics;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    /// Goals collected by either agent.
    pub goals_reached: usize,
    /// Ticks at which the agents were closer than `d_min`.
    pub collisions: usize,
    /// One sample per goal cycle that ended with the human collecting.
    pub hesitations: Vec<f64>,
}

impl SessionMetrics {
    pub fn from_log(log: &EpisodeLog) -> Self {
        Self {
            goals_reached: log.events.iter().filter(|e| matches!(e, Event::GoalCollected { .. })).count(),
            collisions: log.collisions(),
            hesitations: hesitation_samples(log),
        }
    }

    pub fn mean_hesitation(&self) -> Option<f64> {
        (!self.hesitations.is_empty()).then(|| self.hesitations.iter().sum::<f64>() / self.hesitations.len() as f64)
    }

    pub fn to_end(&self) -> EndMetrics {
        EndMetrics {
            goals: self.goals_reached,
            collisions: self.collisions,
            hesitation_mean_s: self.mean_hesitation(),
            hesitations: self.hesitations.clone(),
        }
    }
}

/// Time from `start` until the cumulative displacement toward `goal` first
/// exceeds `threshold`; the whole cycle length if it never does.
/// `path` holds `(t, position)` after each tick of the cycle.
pub fn hesitation_time(start: (f64, Vec2), path: &[(f64, Vec2)], goal: Vec2, threshold: f64) -> f64 {
    let (t0, mut prev) = start;
    let mut progress = 0.0;
    for &(t, p) in path {
        let to_goal = goal - prev;
        let d = to_goal.norm();
        if d > 1e-12 {
            progress += (p - prev).dot(&(to_goal / d));
        }
        if progress > threshold {
            return t - t0;
        }
        prev = p;
    }
    path.last().map_or(0.0, |(t, _)| t - t0)
}

/// Goal cycles run between consecutive collection ticks. A cycle that ends
/// with the human collecting yields one sample, measured toward the goal it
/// collected; robot collections and the unfinished last cycle yield none.
pub fn hesitation_samples(log: &EpisodeLog) -> Vec<f64> {
    let mut ends: BTreeMap<usize, Option<Vec2>> = BTreeMap::new();
    for e in &log.events {
        if let Event::GoalCollected { tick, by, position, .. } = e {
            let slot = ends.entry(*tick).or_insert(None);
            if *by == Agent::Human && slot.is_none() {
                *slot = Some(*position);
            }
        }
    }
    let threshold = 2.0 * log.header.goal_radius;
    let mut start = (0.0, log.header.initial_human.position());
    let mut from = 0;
    let mut samples = Vec::new();
    for (&tick, human_goal) in &ends {
        let Some(cycle) = log.ticks.get(from..=tick) else { break };
        if let Some(goal) = human_goal {
            let path: Vec<(f64, Vec2)> = cycle.iter().map(|r| (r.t, r.x_h.position())).collect();
            samples.push(hesitation_time(start, &path, *goal, threshold));
        }
        let last = &log.ticks[tick];
        start = (last.t, last.x_h.position());
        from = tick + 1;
    }
    samples
}
