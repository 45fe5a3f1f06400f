//! Batch experiments: many seeded episodes per robot kind, run in parallel,
//! persisted as logs and reduced into a report.

use std::path::{Path, PathBuf};

use hrc_core::humans::HumanKind;
use hrc_core::planner::RobotKind;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, EpisodeConfig};
use crate::engine::{run_episode, stream};
use crate::log::{EpisodeLog, LogError};
use crate::metrics::{safety_series, MetricsError, MetricsReport};

const STREAM_HUMAN_KIND: u64 = 4;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("log: {0}")]
    Log(#[from] LogError),
    #[error("metrics: {0}")]
    Metrics(#[from] MetricsError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("could not parse experiment spec: {0}")]
    Parse(#[from] toml::de::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HumanChoice {
    Uncertain,
    Stubborn,
    /// Each episode draws its human kind with probability 1/2 from its seed.
    Mixed,
}

impl std::str::FromStr for HumanChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uncertain" => Ok(HumanChoice::Uncertain),
            "stubborn" => Ok(HumanChoice::Stubborn),
            "mixed" => Ok(HumanChoice::Mixed),
            other => Err(format!("unknown human choice `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub n_episodes: usize,
    /// Episode `i` uses seed `seed + i` unless `seeds` is given.
    pub seed: u64,
    pub seeds: Option<Vec<u64>>,
    pub human: HumanChoice,
    pub robots: Vec<RobotKind>,
    pub base: EpisodeConfig,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            n_episodes: 100,
            seed: 0,
            seeds: None,
            human: HumanChoice::Mixed,
            robots: RobotKind::ALL.to_vec(),
            base: EpisodeConfig::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml_str(s: &str) -> Result<Self, ExperimentError> {
        let spec: Self = toml::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self, ExperimentError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.robots.is_empty() {
            return Err(ExperimentError::Invalid("robots must list at least one robot kind".into()));
        }
        if self.seeds.as_ref().is_some_and(|s| s.is_empty()) || (self.seeds.is_none() && self.n_episodes == 0) {
            return Err(ExperimentError::Invalid("at least one episode is required".into()));
        }
        self.base.validate()?;
        Ok(())
    }

    pub fn seed_list(&self) -> Vec<u64> {
        match &self.seeds {
            Some(s) => s.clone(),
            None => (0..self.n_episodes as u64).map(|i| self.seed + i).collect(),
        }
    }

    /// Human kind for a seed; the same for every robot kind.
    pub fn human_kind(&self, seed: u64) -> HumanKind {
        match self.human {
            HumanChoice::Uncertain => HumanKind::Uncertain,
            HumanChoice::Stubborn => HumanKind::Stubborn,
            HumanChoice::Mixed => {
                if stream(seed, STREAM_HUMAN_KIND).random::<f64>() < 0.5 {
                    HumanKind::Uncertain
                } else {
                    HumanKind::Stubborn
                }
            }
        }
    }

    /// One config per (robot kind, seed), robot-major.
    pub fn episode_configs(&self) -> Vec<EpisodeConfig> {
        let seeds = self.seed_list();
        let mut out = Vec::with_capacity(seeds.len() * self.robots.len());
        for &robot in &self.robots {
            for &seed in &seeds {
                let mut cfg = self.base.clone();
                cfg.seed = seed;
                cfg.robot.kind = robot;
                cfg.human.kind = self.human_kind(seed);
                out.push(cfg);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeFailure {
    pub robot_kind: RobotKind,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub logs: Vec<EpisodeLog>,
    pub failures: Vec<EpisodeFailure>,
    /// `None` when every episode failed.
    pub report: Option<MetricsReport>,
}

pub fn log_file_name(log: &EpisodeLog) -> String {
    format!("{}_{}.ndjson", log.header.robot_kind.as_str(), log.header.seed)
}

/// Run every episode of the spec. Failed episodes are reported without
/// aborting the batch. With `out_dir`, logs go to `out_dir/logs/` and the
/// report to `out_dir/report.{txt,json}`.
pub fn run_experiment(spec: &ExperimentSpec, out_dir: Option<&Path>) -> Result<ExperimentOutput, ExperimentError> {
    spec.validate()?;
    let results: Vec<(EpisodeConfig, Result<EpisodeLog, String>)> = spec
        .episode_configs()
        .into_par_iter()
        .map(|cfg| {
            let r = run_episode(&cfg).map_err(|e| e.to_string());
            (cfg, r)
        })
        .collect();
    let mut logs = Vec::new();
    let mut failures = Vec::new();
    for (cfg, r) in results {
        match r {
            Ok(log) => logs.push(log),
            Err(error) => failures.push(EpisodeFailure { robot_kind: cfg.robot.kind, seed: cfg.seed, error }),
        }
    }
    let report = if logs.is_empty() { None } else { Some(MetricsReport::from_logs(&logs)?) };
    if let Some(dir) = out_dir {
        let log_dir = dir.join("logs");
        std::fs::create_dir_all(&log_dir)?;
        for log in &logs {
            log.save(&log_dir.join(log_file_name(log)))?;
        }
        if let Some(report) = &report {
            write_report(report, dir)?;
        }
        if !failures.is_empty() {
            std::fs::write(dir.join("failures.json"), serde_json::to_string_pretty(&failures).expect("serializes"))?;
        }
    }
    Ok(ExperimentOutput { logs, failures, report })
}

pub fn write_report(report: &MetricsReport, dir: &Path) -> Result<(), ExperimentError> {
    std::fs::write(dir.join("report.txt"), report.to_text())?;
    std::fs::write(dir.join("report.json"), report.to_json())?;
    Ok(())
}

/// Every `*.ndjson` file directly inside `dir`, in file-name order.
pub fn log_paths(dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ndjson"))
        .collect();
    paths.sort();
    Ok(paths)
}

pub fn load_logs(dir: &Path) -> Result<Vec<EpisodeLog>, ExperimentError> {
    log_paths(dir)?.iter().map(|p| EpisodeLog::load(p).map_err(ExperimentError::from)).collect()
}

/// Write one `tick<TAB>probability` file per log that carries a safety series.
/// Returns the files written.
pub fn write_series(logs: &[EpisodeLog], dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for log in logs {
        let series = safety_series(log);
        if series.is_empty() {
            continue;
        }
        let mut text = String::from("tick\tsafe_prob\n");
        for (tick, p) in series {
            text.push_str(&format!("{tick}\t{p}\n"));
        }
        let path = dir.join(format!("{}_{}.tsv", log.header.robot_kind.as_str(), log.header.seed));
        std::fs::write(&path, text)?;
        written.push(path);
    }
    Ok(written)
}
