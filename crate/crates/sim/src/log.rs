//! Episode logs as newline-delimited JSON: one header record, then tick and
//! event records in time order.

use std::io::{BufRead, Write};

use hrc_core::dynamics::{AgentState, Vec2};
use hrc_core::humans::HumanKind;
use hrc_core::planner::{Mode, RobotKind};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::EpisodeConfig;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("log has no header record")]
    MissingHeader,
    #[error("line {0}: second header record")]
    DuplicateHeader(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Agent {
    Human,
    Robot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub seed: u64,
    pub human_kind: HumanKind,
    pub robot_kind: RobotKind,
    pub n_ticks: usize,
    pub dt: f64,
    pub goal_radius: f64,
    pub d_min: f64,
    pub epsilon: f64,
    pub initial_goals: Vec<Vec2>,
    pub initial_human: AgentState,
    pub initial_robot: AgentState,
    pub config: EpisodeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: usize,
    /// Time at the end of the tick, seconds.
    pub t: f64,
    /// States after the tick.
    pub x_h: AgentState,
    pub x_r: AgentState,
    pub u_h: Vec2,
    pub u_r: Vec2,
    pub human_goal: Option<usize>,
    pub robot_goal: Option<usize>,
    pub mode: Option<Mode>,
    pub prior: Vec<f64>,
    pub mental_model: Vec<f64>,
    pub human_belief: Vec<f64>,
    pub min_distance: f64,
    /// Long-term safety probability at the start of the tick.
    pub safe_prob: Option<f64>,
    pub safety_intervened: bool,
    pub candidate_counts: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    GoalCollected { tick: usize, t: f64, by: Agent, index: usize, position: Vec2, respawned_at: Vec2 },
    HumanGoalChanged { tick: usize, t: f64, from: usize, to: usize, forced: bool },
    RobotGoalChanged { tick: usize, t: f64, from: usize, to: usize, forced: bool },
    Collision { tick: usize, t: f64, distance: f64 },
}

impl Event {
    pub fn tick(&self) -> usize {
        match self {
            Event::GoalCollected { tick, .. }
            | Event::HumanGoalChanged { tick, .. }
            | Event::RobotGoalChanged { tick, .. }
            | Event::Collision { tick, .. } => *tick,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Record {
    Header(Box<Header>),
    Tick(Box<TickRecord>),
    Event(Event),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub header: Header,
    pub ticks: Vec<TickRecord>,
    pub events: Vec<Event>,
}

impl EpisodeLog {
    pub fn goals_collected_by(&self, agent: Agent) -> usize {
        self.events.iter().filter(|e| matches!(e, Event::GoalCollected { by, .. } if *by == agent)).count()
    }

    pub fn voluntary_human_changes(&self) -> usize {
        self.events.iter().filter(|e| matches!(e, Event::HumanGoalChanged { forced: false, .. })).count()
    }

    pub fn voluntary_robot_changes(&self) -> usize {
        self.events.iter().filter(|e| matches!(e, Event::RobotGoalChanged { forced: false, .. })).count()
    }

    pub fn collisions(&self) -> usize {
        self.events.iter().filter(|e| matches!(e, Event::Collision { .. })).count()
    }

    pub fn write_ndjson<W: Write>(&self, mut w: W) -> Result<(), LogError> {
        let mut line = |r: &Record| -> Result<(), LogError> {
            serde_json::to_writer(&mut w, r).map_err(|e| LogError::Json { line: 0, source: e })?;
            w.write_all(b"\n")?;
            Ok(())
        };
        line(&Record::Header(Box::new(self.header.clone())))?;
        let mut events = self.events.iter().peekable();
        for tick in &self.ticks {
            line(&Record::Tick(Box::new(tick.clone())))?;
            while let Some(e) = events.next_if(|e| e.tick() <= tick.tick) {
                line(&Record::Event(e.clone()))?;
            }
        }
        for e in events {
            line(&Record::Event(e.clone()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_ndjson<R: BufRead>(r: R) -> Result<Self, LogError> {
        let mut header = None;
        let mut ticks = Vec::new();
        let mut events = Vec::new();
        for (i, text) in r.lines().enumerate() {
            let text = text?;
            if text.trim().is_empty() {
                continue;
            }
            let record: Record = serde_json::from_str(&text).map_err(|e| LogError::Json { line: i + 1, source: e })?;
            match record {
                Record::Header(h) => {
                    if header.replace(*h).is_some() {
                        return Err(LogError::DuplicateHeader(i + 1));
                    }
                }
                Record::Tick(t) => ticks.push(*t),
                Record::Event(e) => events.push(e),
            }
        }
        Ok(Self { header: header.ok_or(LogError::MissingHeader)?, ticks, events })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), LogError> {
        let f = std::fs::File::create(path)?;
        self.write_ndjson(std::io::BufWriter::new(f))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, LogError> {
        let f = std::fs::File::open(path)?;
        Self::read_ndjson(std::io::BufReader::new(f))
    }
}
