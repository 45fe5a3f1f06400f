//! Episode engine, batch experiments and metrics for the human-robot
//! goal-collection task.

pub mod config;
pub mod engine;
pub mod experiment;
pub mod log;
pub mod metrics;

pub use config::{ConfigError, EpisodeConfig};
pub use engine::{run_episode, Episode, EpisodeError};
pub use experiment::{run_experiment, ExperimentSpec, HumanChoice};
pub use log::{Agent, EpisodeLog, Event, TickRecord};
pub use metrics::MetricsReport;
