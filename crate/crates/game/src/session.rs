//! One interactive game: the human avatar follows the player's pointer and
//! the robot runs on the simulation engine.

use std::path::{Path, PathBuf};

use hrc_core::dynamics::Vec2;
use hrc_sim::engine::EpisodeError;
use hrc_sim::log::LogError;
use hrc_sim::{Episode, EpisodeConfig, EpisodeLog, Event};
use thiserror::Error;

use crate::input::{estimate_human_control, map_input};
use crate::metrics::SessionMetrics;
use crate::protocol::{Point, RobotChoice, RobotView, ServerMessage};

/// Inputs older than this many ticks (0.5 s) freeze the avatar.
pub const STALE_TICKS: usize = 5;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error("could not persist session log: {0}")]
    Log(#[from] LogError),
}

/// The latest pointer sample, stamped with the tick during which it arrived.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointerSample {
    pub pointer: Vec2,
    pub t_ms: u64,
    pub arrived_tick: usize,
}

/// Episode settings for a game against `robot`.
pub fn session_config(base: &EpisodeConfig, robot: RobotChoice, duration_s: f64, seed: u64) -> EpisodeConfig {
    let mut cfg = base.clone();
    cfg.duration_s = duration_s;
    cfg.seed = seed;
    cfg.robot.kind = robot.kind();
    cfg.robot.safety_monitor = true;
    cfg
}

#[derive(Debug)]
pub struct Session {
    id: String,
    episode: Episode,
    latest: Option<PointerSample>,
    score: usize,
}

impl Session {
    pub fn new(id: impl Into<String>, cfg: EpisodeConfig) -> Result<Self, SessionError> {
        Ok(Self { id: id.into(), episode: Episode::new(cfg)?, latest: None, score: 0 })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn episode(&self) -> &Episode {
        &self.episode
    }

    pub fn is_done(&self) -> bool {
        self.episode.is_done()
    }

    /// Record a pointer sample (normalized coordinates).
    pub fn receive_input(&mut self, x: f64, y: f64, t_ms: u64) {
        self.latest = Some(PointerSample { pointer: Vec2::new(x, y), t_ms, arrived_tick: self.episode.tick_index() });
    }

    /// The pointer if its latest sample is at most [`STALE_TICKS`] old.
    pub fn fresh_pointer(&self) -> Option<Vec2> {
        let now = self.episode.tick_index();
        self.latest.filter(|s| now - s.arrived_tick <= STALE_TICKS).map(|s| s.pointer)
    }

    pub fn tick(&mut self) -> Result<ServerMessage, SessionError> {
        let cfg = self.episode.config();
        let prev = *self.episode.human_state();
        let next = map_input(self.fresh_pointer(), &prev, cfg.dt, &cfg.workspace);
        let u_h = estimate_human_control(&prev, &next, self.episode.lqr().model()).u;
        let out = self.episode.step_external(next, u_h)?;
        let mut collision = false;
        for e in &out.events {
            match e {
                Event::GoalCollected { .. } => self.score += 1,
                Event::Collision { .. } => collision = true,
                _ => {}
            }
        }
        let r = &out.record;
        Ok(ServerMessage::State {
            t: r.t,
            human: point(r.x_h.position()),
            robot: RobotView { x: r.x_r.position().x, y: r.x_r.position().y, goal: r.robot_goal, mode: r.mode },
            goals: self.episode.goals().iter().map(|g| point(*g)).collect(),
            score: self.score,
            collision,
        })
    }

    pub fn metrics(&self) -> SessionMetrics {
        SessionMetrics::from_log(self.episode.log())
    }

    /// End the session, persisting its log under `log_dir` if given.
    pub fn finish(self, log_dir: Option<&Path>) -> Result<(SessionMetrics, EpisodeLog, Option<PathBuf>), SessionError> {
        let metrics = self.metrics();
        let log = self.episode.into_log();
        let path = match log_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(LogError::Io)?;
                let path = dir.join(format!("session-{}.ndjson", self.id));
                log.save(&path)?;
                Some(path)
            }
            None => None,
        };
        Ok((metrics, log, path))
    }
}

fn point(p: Vec2) -> Point {
    Point { x: p.x, y: p.y }
}

/// A recorded pointer trace: `(tick, x, y)` samples in tick order, each
/// delivered just before that tick runs.
pub type PointerTrace = [(usize, f64, f64)];

/// Play a whole session from a recorded trace.
pub fn replay(cfg: EpisodeConfig, trace: &PointerTrace) -> Result<(SessionMetrics, EpisodeLog), SessionError> {
    let mut session = Session::new("replay", cfg)?;
    let mut next = trace.iter().peekable();
    while !session.is_done() {
        let now = session.episode.tick_index();
        while let Some(&&(tick, x, y)) = next.peek() {
            if tick > now {
                break;
            }
            session.receive_input(x, y, (tick as u64) * 100);
            next.next();
        }
        session.tick()?;
    }
    let (metrics, log, _) = session.finish(None)?;
    Ok((metrics, log))
}
