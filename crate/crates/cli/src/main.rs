use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hrc_core::humans::HumanKind;
use hrc_core::planner::RobotKind;
use hrc_sim::experiment::{load_logs, run_experiment, write_report, write_series, ExperimentError};
use hrc_sim::{run_episode, ConfigError, EpisodeConfig, EpisodeError, ExperimentSpec, MetricsReport};

#[derive(Parser)]
#[command(name = "hrc", version, about = "Human-robot goal collection simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and print its metrics.
    Run {
        #[arg(long)]
        human: Option<HumanKind>,
        #[arg(long)]
        robot: Option<RobotKind>,
        #[arg(long)]
        seed: Option<u64>,
        /// Episode length in seconds.
        #[arg(long)]
        duration: Option<f64>,
        /// TOML episode config; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the episode log (ndjson) here.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Run an experiment spec, writing logs and reports under --out.
    Batch {
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reduce a directory of episode logs to a metrics report.
    Report {
        logs: PathBuf,
        #[arg(long)]
        json: bool,
        /// Also write report.txt and report.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write per-episode safety-probability series from a log directory.
    Series {
        logs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Start the game service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        log_dir: Option<PathBuf>,
        /// Directory holding an index.html to serve at `/`.
        #[arg(long)]
        static_dir: Option<PathBuf>,
        /// TOML episode config that sessions start from.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

/// Exit 1 for bad input, 2 for failures while doing the work.
enum Failure {
    Invalid(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Failure::Runtime(e.to_string()),
            _ => Failure::Invalid(e.to_string()),
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Invalid(_) | ExperimentError::Parse(_) => Failure::Invalid(e.to_string()),
            ExperimentError::Config(c) => c.into(),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<EpisodeError> for Failure {
    fn from(e: EpisodeError) -> Self {
        match e {
            EpisodeError::Config(c) => c.into(),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn print_report(report: &MetricsReport, json: bool) {
    if json {
        println!("{}", report.to_json());
    } else {
        print!("{}", report.to_text());
    }
}

fn load_config(path: Option<&Path>) -> Result<EpisodeConfig, Failure> {
    Ok(path.map(EpisodeConfig::from_file).transpose()?.unwrap_or_default())
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { human, robot, seed, duration, config, log } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(h) = human {
                cfg.human.kind = h;
            }
            if let Some(r) = robot {
                cfg.robot.kind = r;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(d) = duration {
                cfg.duration_s = d;
            }
            cfg.validate()?;
            let episode = run_episode(&cfg)?;
            if let Some(path) = log {
                episode.save(&path).map_err(|e| Failure::Runtime(e.to_string()))?;
            }
            let report = MetricsReport::from_logs(std::slice::from_ref(&episode)).map_err(|e| Failure::Runtime(e.to_string()))?;
            print_report(&report, false);
        }
        Command::Batch { spec, out } => {
            let spec = ExperimentSpec::from_file(&spec)?;
            let output = run_experiment(&spec, out.as_deref())?;
            for f in &output.failures {
                eprintln!("episode {} seed {} failed: {}", f.robot_kind.as_str(), f.seed, f.error);
            }
            match &output.report {
                Some(r) => print_report(r, false),
                None => return Err(Failure::Runtime("every episode failed".into())),
            }
            if !output.failures.is_empty() {
                return Err(Failure::Runtime(format!("{} episodes failed", output.failures.len())));
            }
        }
        Command::Report { logs, json, out } => {
            let logs = load_logs(&logs)?;
            let report = MetricsReport::from_logs(&logs).map_err(|e| Failure::Invalid(e.to_string()))?;
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).map_err(|e| Failure::Runtime(e.to_string()))?;
                write_report(&report, &dir)?;
            }
            print_report(&report, json);
        }
        Command::Series { logs, out } => {
            let logs = load_logs(&logs)?;
            let written = write_series(&logs, &out)?;
            println!("wrote {} series files to {}", written.len(), out.display());
        }
        Command::Serve { port, log_dir, static_dir, config } => {
            let base = load_config(config.as_deref())?;
            let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::Runtime(e.to_string()))?;
            runtime.block_on(async {
                let listener = tokio::net::TcpListener::bind(("0.0.0.0", port))
                    .await
                    .map_err(|e| Failure::Runtime(format!("cannot listen on port {port}: {e}")))?;
                eprintln!("serving on http://{}", listener.local_addr().map_err(|e| Failure::Runtime(e.to_string()))?);
                let cfg = hrc_game::ServerConfig { log_dir, static_dir, base };
                hrc_game::serve(listener, cfg).await.map_err(|e| Failure::Runtime(e.to_string()))
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
