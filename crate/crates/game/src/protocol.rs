//! Wire protocol: JSON text frames over a websocket.

use hrc_core::planner::{Mode, RobotKind};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_DURATION_S: f64 = 45.0;
/// Longest session a client may request.
pub const MAX_DURATION_S: f64 = 600.0;

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("unknown robot `{0}` (expected naive, reactive or proactive)")]
    Robot(String),
    #[error("duration_s must lie in (0, {MAX_DURATION_S}] and be a multiple of 0.1, got {0}")]
    Duration(f64),
    #[error("input coordinates must lie in [0, 1], got ({0}, {1})")]
    OutOfRange(f64, f64),
}

/// Robot controllers offered to players.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobotChoice {
    Naive,
    Reactive,
    Proactive,
}

impl RobotChoice {
    /// Every session runs with safe control active, so the proactive choice
    /// is the safe proactive robot.
    pub fn kind(self) -> RobotKind {
        match self {
            RobotChoice::Naive => RobotKind::Naive,
            RobotChoice::Reactive => RobotKind::Reactive,
            RobotChoice::Proactive => RobotKind::ProactiveSafe,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Start {
        robot: RobotChoice,
        #[serde(default = "default_duration")]
        duration_s: f64,
        #[serde(default)]
        seed: u64,
    },
    Input {
        x: f64,
        y: f64,
        t_ms: u64,
    },
    Abort,
}

fn default_duration() -> f64 {
    DEFAULT_DURATION_S
}

impl ClientMessage {
    /// Parse and validate one text frame.
    pub fn parse(text: &str) -> Result<Self, ProtocolError> {
        let msg: ClientMessage = serde_json::from_str(text).map_err(|e| {
            let s = e.to_string();
            match s.strip_prefix("unknown variant `").and_then(|r| r.split('`').next()) {
                Some(name) if s.contains("naive") => ProtocolError::Robot(name.to_string()),
                _ => ProtocolError::Malformed(s),
            }
        })?;
        msg.validate()?;
        Ok(msg)
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        match *self {
            ClientMessage::Start { duration_s, .. } => {
                let ticks = duration_s * 10.0;
                if !(duration_s > 0.0 && duration_s <= MAX_DURATION_S) || (ticks - ticks.round()).abs() > 1e-6 {
                    return Err(ProtocolError::Duration(duration_s));
                }
            }
            ClientMessage::Input { x, y, .. } => {
                if !((0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y)) {
                    return Err(ProtocolError::OutOfRange(x, y));
                }
            }
            ClientMessage::Abort => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotView {
    pub x: f64,
    pub y: f64,
    pub goal: Option<usize>,
    pub mode: Option<Mode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndMetrics {
    pub goals: usize,
    pub collisions: usize,
    pub hesitation_mean_s: Option<f64>,
    pub hesitations: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    State {
        t: f64,
        human: Point,
        robot: RobotView,
        goals: Vec<Point>,
        score: usize,
        collision: bool,
    },
    End {
        metrics: EndMetrics,
    },
    Error {
        msg: String,
    },
}

impl ServerMessage {
    pub fn error(msg: impl ToString) -> Self {
        ServerMessage::Error { msg: msg.to_string() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}
