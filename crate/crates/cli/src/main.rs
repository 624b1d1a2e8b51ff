//! `gtamp`: instance generation, planning runs, data collection and model
//! training for the two-room rearrangement domain.

mod commands;
mod store;
mod summary;

use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> CliError {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn input(path: &Path, e: impl std::fmt::Display) -> CliError {
        CliError::Input {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } | CliError::Input { .. } => 3,
            CliError::Failed(_) => 1,
        }
    }
}

#[derive(clap::Args, Debug, Clone)]
pub struct Globals {
    /// Base directory for relative --out paths.
    #[arg(long, global = true, env = "GTAMP_OUT_ROOT")]
    pub out_root: Option<PathBuf>,
    /// Worker threads for plan and collect; defaults to the number of cores.
    #[arg(long, global = true, env = "GTAMP_WORKERS")]
    pub workers: Option<usize>,
}

impl Globals {
    pub fn resolve(&self, out: &Path) -> PathBuf {
        match &self.out_root {
            Some(root) if out.is_relative() => root.join(out),
            _ => out.to_path_buf(),
        }
    }

    pub fn workers(&self) -> usize {
        self.workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .max(1)
    }
}

#[derive(Parser, Debug)]
#[command(name = "gtamp", version, about = "Planar task-and-motion planning with learned guidance")]
struct Cli {
    #[command(flatten)]
    globals: Globals,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate problem instances.
    Gen(commands::GenArgs),
    /// Run planners on instances and write per-run and summary tables.
    Plan(commands::PlanArgs),
    /// Run one planner and store its episodes.
    Collect(commands::CollectArgs),
    /// Train the rank network on collected episodes.
    TrainRank(commands::TrainRankArgs),
    /// Train the pick and place samplers on collected episodes.
    TrainSampler(commands::TrainSamplerArgs),
    /// Score a trained sampler by KDE log-likelihood on held-out episodes.
    EvalSampler(commands::EvalSamplerArgs),
    /// Generate, bootstrap, train and evaluate end to end.
    Pipeline(commands::PipelineArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let g = &cli.globals;
    let result = match &cli.command {
        Command::Gen(a) => commands::gen(g, a),
        Command::Plan(a) => commands::plan(g, a).map(|_| ()),
        Command::Collect(a) => commands::collect(g, a),
        Command::TrainRank(a) => commands::train_rank_cmd(g, a),
        Command::TrainSampler(a) => commands::train_sampler(g, a),
        Command::EvalSampler(a) => commands::eval_sampler(g, a).map(|_| ()),
        Command::Pipeline(a) => commands::pipeline(g, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
