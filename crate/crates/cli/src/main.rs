//! `copo` command-line entry point.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
    #[error("gradient check failed: {0}")]
    Gradcheck(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Runtime(_) => 3,
            Self::Gradcheck(_) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "copo", version, about = "Coordinated multi-agent policy optimization on a 2D traffic simulator")]
struct Cli {
    /// Worker threads for environment stepping and evaluation episodes.
    #[arg(long, global = true, env = "COPO_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one run per configured seed.
    Train(TrainArgs),
    /// Evaluate a checkpoint with the deterministic policy.
    Eval(EvalArgs),
    /// Render density images from exported trajectory files.
    Plot(PlotArgs),
    /// Compare analytic gradients against finite-difference and brute-force oracles.
    Gradcheck {
        /// mlp, ppo_loss, lcf_bandit, gae, neighborhood or all.
        fixture: String,
    },
    /// Scene utilities.
    #[command(subcommand)]
    Scene(SceneCommand),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `key=value` overrides, e.g. `algorithm=copo seed=0`.
    #[arg(long = "override", num_args = 1.., value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory, overriding the config file.
    #[arg(long, env = "COPO_OUTPUT_DIR")]
    pub output_dir: Option<PathBuf>,
    /// Continue from the latest checkpoint of each run.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub checkpoint: PathBuf,
    /// Built-in scene name or scene file.
    #[arg(long)]
    pub scene: String,
    #[arg(long, default_value_t = 10)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated live agent counts; one output row each.
    #[arg(long, value_delimiter = ',')]
    pub initial_agents: Vec<usize>,
    /// Share of spawns driven by the IDM controller, in [0, 1).
    #[arg(long, default_value_t = 0.0)]
    pub idm_fraction: f64,
    #[arg(long, default_value_t = 1000)]
    pub horizon: usize,
    /// Write one JSON-lines trajectory file per episode into this directory.
    #[arg(long)]
    pub trajectories: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Trajectory files written by `eval --trajectories`.
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum SceneCommand {
    /// List built-in scenes.
    List,
    /// Write a built-in scene as TOML.
    Dump {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Config("--workers must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    match cli.command {
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Plot(a) => commands::plot(&a),
        Command::Gradcheck { fixture } => commands::gradcheck(&fixture),
        Command::Scene(SceneCommand::List) => {
            copo_core::env::builtin::NAMES.iter().for_each(|n| println!("{n}"));
            Ok(())
        }
        Command::Scene(SceneCommand::Dump { name, out }) => commands::scene_dump(&name, out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
