//! Metric reductions. Every function here is a pure function of episode
//! logs, so reports regenerated from persisted logs match the originals.

use std::fmt::Write as _;

use hrc_core::humans::HumanKind;
use hrc_core::planner::RobotKind;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::log::{Agent, EpisodeLog};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no episode logs to reduce")]
    Empty,
}

/// Mean and sample standard deviation (`n − 1` denominator, 0 when `n < 2`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { n, mean: 0.0, sd: 0.0 };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self { n, mean, sd }
    }
}

impl std::fmt::Display for Stat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.2} ± {:.2}", self.mean, self.sd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CourtesyMetrics {
    /// Percentage of episodes with at least one voluntary human goal change.
    pub pct_changed: f64,
    pub times_changed: Stat,
}

/// Voluntary human goal changes; changes forced by collection are excluded.
pub fn courtesy_metrics(logs: &[&EpisodeLog]) -> Result<CourtesyMetrics, MetricsError> {
    if logs.is_empty() {
        return Err(MetricsError::Empty);
    }
    let counts: Vec<f64> = logs.iter().map(|l| l.voluntary_human_changes() as f64).collect();
    let changed = counts.iter().filter(|c| **c > 0.0).count();
    Ok(CourtesyMetrics { pct_changed: 100.0 * changed as f64 / logs.len() as f64, times_changed: Stat::of(&counts) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyMetrics {
    pub human: Stat,
    pub robot: Stat,
    pub team: Stat,
}

/// Goals reached per episode by each agent and by the team.
pub fn efficiency_metrics(logs: &[&EpisodeLog]) -> EfficiencyMetrics {
    let human: Vec<f64> = logs.iter().map(|l| l.goals_collected_by(Agent::Human) as f64).collect();
    let robot: Vec<f64> = logs.iter().map(|l| l.goals_collected_by(Agent::Robot) as f64).collect();
    let team: Vec<f64> = human.iter().zip(&robot).map(|(h, r)| h + r).collect();
    EfficiencyMetrics { human: Stat::of(&human), robot: Stat::of(&robot), team: Stat::of(&team) }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyMetrics {
    pub total_ticks: usize,
    pub collision_ticks: usize,
    /// Fraction of ticks without a collision.
    pub collision_free_rate: f64,
    /// Ticks with a logged long-term safety probability.
    pub evaluated_ticks: usize,
    /// Fraction of evaluated ticks whose probability is at least `1 − ε`.
    pub frac_ticks_safe: f64,
    pub min_safe_prob: Option<f64>,
}

/// `(tick, probability)` pairs of one episode.
pub fn safety_series(log: &EpisodeLog) -> Vec<(usize, f64)> {
    log.ticks.iter().filter_map(|t| t.safe_prob.map(|p| (t.tick, p))).collect()
}

pub fn safety_metrics(logs: &[&EpisodeLog]) -> SafetyMetrics {
    let total_ticks: usize = logs.iter().map(|l| l.ticks.len()).sum();
    let collision_ticks: usize = logs.iter().map(|l| l.collisions()).sum();
    let mut evaluated = 0usize;
    let mut safe = 0usize;
    let mut min_prob: Option<f64> = None;
    for log in logs {
        let threshold = 1.0 - log.header.epsilon;
        for (_, p) in safety_series(log) {
            evaluated += 1;
            if p >= threshold {
                safe += 1;
            }
            min_prob = Some(min_prob.map_or(p, |m| m.min(p)));
        }
    }
    SafetyMetrics {
        total_ticks,
        collision_ticks,
        collision_free_rate: if total_ticks == 0 { 1.0 } else { 1.0 - collision_ticks as f64 / total_ticks as f64 },
        evaluated_ticks: evaluated,
        frac_ticks_safe: if evaluated == 0 { 1.0 } else { safe as f64 / evaluated as f64 },
        min_safe_prob: min_prob,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub robot_kind: RobotKind,
    /// `None` for the all-humans group.
    pub human_kind: Option<HumanKind>,
    pub n_episodes: usize,
    /// Present when the group holds uncertain-human episodes.
    pub courtesy: Option<CourtesyMetrics>,
    pub efficiency: EfficiencyMetrics,
    pub safety: SafetyMetrics,
    pub robot_goal_switches: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_episodes: usize,
    pub groups: Vec<GroupReport>,
}

fn group(robot_kind: RobotKind, human_kind: Option<HumanKind>, logs: &[&EpisodeLog]) -> GroupReport {
    let uncertain: Vec<&EpisodeLog> =
        logs.iter().copied().filter(|l| l.header.human_kind == HumanKind::Uncertain).collect();
    let switches: Vec<f64> = logs.iter().map(|l| l.voluntary_robot_changes() as f64).collect();
    GroupReport {
        robot_kind,
        human_kind,
        n_episodes: logs.len(),
        courtesy: courtesy_metrics(&uncertain).ok(),
        efficiency: efficiency_metrics(logs),
        safety: safety_metrics(logs),
        robot_goal_switches: Stat::of(&switches),
    }
}

impl MetricsReport {
    /// Reduce logs into per-robot-kind groups, each split by human kind.
    /// Logs are ordered by (robot kind, seed) first so the result does not
    /// depend on the order they were produced or loaded in.
    pub fn from_logs(logs: &[EpisodeLog]) -> Result<Self, MetricsError> {
        if logs.is_empty() {
            return Err(MetricsError::Empty);
        }
        let mut sorted: Vec<&EpisodeLog> = logs.iter().collect();
        sorted.sort_by_key(|l| (l.header.robot_kind, l.header.seed, l.header.human_kind == HumanKind::Stubborn));
        let mut kinds: Vec<RobotKind> = sorted.iter().map(|l| l.header.robot_kind).collect();
        kinds.dedup();
        let mut groups = Vec::new();
        for kind in kinds {
            let of_kind: Vec<&EpisodeLog> = sorted.iter().copied().filter(|l| l.header.robot_kind == kind).collect();
            groups.push(group(kind, None, &of_kind));
            for human in [HumanKind::Uncertain, HumanKind::Stubborn] {
                let sub: Vec<&EpisodeLog> = of_kind.iter().copied().filter(|l| l.header.human_kind == human).collect();
                if !sub.is_empty() {
                    groups.push(group(kind, Some(human), &sub));
                }
            }
        }
        Ok(Self { n_episodes: logs.len(), groups })
    }

    pub fn group(&self, robot_kind: RobotKind, human_kind: Option<HumanKind>) -> Option<&GroupReport> {
        self.groups.iter().find(|g| g.robot_kind == robot_kind && g.human_kind == human_kind)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "episodes: {}", self.n_episodes);
        let _ = writeln!(
            s,
            "{:<16} {:<10} {:>4}  {:>10} {:>13}  {:>13} {:>13} {:>13}  {:>13}  {:>9} {:>9}",
            "robot", "human", "n", "% changed", "times changed", "human goals", "robot goals", "team goals",
            "robot switch", "no-coll", "F>=1-eps"
        );
        for g in &self.groups {
            let human = g.human_kind.map_or("all", |h| h.as_str());
            let (pct, times) = match &g.courtesy {
                Some(c) => (format!("{:.1}", c.pct_changed), c.times_changed.to_string()),
                None => ("-".into(), "-".into()),
            };
            let frac = if g.safety.evaluated_ticks == 0 { "-".into() } else { format!("{:.4}", g.safety.frac_ticks_safe) };
            let _ = writeln!(
                s,
                "{:<16} {:<10} {:>4}  {:>10} {:>13}  {:>13} {:>13} {:>13}  {:>13}  {:>9.5} {:>9}",
                g.robot_kind.as_str(),
                human,
                g.n_episodes,
                pct,
                times,
                g.efficiency.human.to_string(),
                g.efficiency.robot.to_string(),
                g.efficiency.team.to_string(),
                g.robot_goal_switches.to_string(),
                g.safety.collision_free_rate,
                frac
            );
        }
        s
    }
}
