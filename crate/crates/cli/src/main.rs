//! `deadend`: scenario generation, policy training, and benchmark evaluation
//! for the narrow dead-end escape task, one subcommand per pipeline stage.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Wrong invocation rather than a failed run; exits with status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

pub fn usage(message: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(message.into()))
}

#[derive(Parser)]
#[command(
    name = "deadend",
    version,
    about = "Narrow dead-end escape benchmark: generate scenarios, train the policy, score controllers"
)]
struct Cli {
    /// Worker threads for generation and evaluation (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a validated scenario batch with one SVG per scenario.
    Gen(GenArgs),
    /// Re-run a scenario's recorded escape and report the outcome.
    Replay(ReplayArgs),
    /// Train the soft actor-critic policy, checkpointing every epoch.
    Train(TrainArgs),
    /// Score controllers over a batch and print the metrics table.
    Eval(EvalArgs),
    /// Render one scenario, optionally with a driven trajectory, to SVG.
    Render(RenderArgs),
    /// Fill a demonstration replay buffer from the recorded escapes.
    GenDemos(GenDemosArgs),
}

#[derive(Args)]
pub struct GenArgs {
    /// Output directory (batch.json, SVGs, effective config).
    #[arg(long)]
    pub out: PathBuf,
    /// Run configuration TOML; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scenarios to generate (overrides the config).
    #[arg(long)]
    pub count: Option<usize>,
    /// Obstacle finish: walls, cylinders, or mixed.
    #[arg(long)]
    pub variant: Option<String>,
    /// Maneuver style: corridor, tight-turn, or mixed.
    #[arg(long)]
    pub style: Option<String>,
    /// Run seed; each stage draws a decorrelated substream from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Overwrite existing outputs.
    #[arg(long)]
    pub force: bool,
}

#[derive(Args)]
pub struct ReplayArgs {
    /// Scenario batch JSON.
    #[arg(long)]
    pub batch: PathBuf,
    /// Scenario id within the batch.
    #[arg(long)]
    pub id: String,
    /// Also render the replayed trajectory to this SVG file.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Overwrite an existing SVG.
    #[arg(long)]
    pub force: bool,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Output directory (checkpoint, buffer, log, effective config).
    #[arg(long)]
    pub out: PathBuf,
    /// Train on this scenario batch; omit to generate scenarios per the
    /// config's `train.generate_count` (which enables the curriculum).
    #[arg(long)]
    pub batch: Option<PathBuf>,
    /// Run configuration TOML; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Episode budget (overrides the config).
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Episodes between update rounds (overrides the config).
    #[arg(long)]
    pub update_every: Option<usize>,
    /// Gradient steps per update round (overrides the config).
    #[arg(long)]
    pub updates_per_round: Option<usize>,
    /// Episodes per checkpointing epoch (overrides the config).
    #[arg(long)]
    pub epoch_episodes: Option<usize>,
    /// Run seed; each stage draws a decorrelated substream from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Resume from this checkpoint; a `buffer.jsonl` next to it is
    /// restored too, and the lifetime episode counter carries on.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Warm-start the replay buffer from this demonstration file.
    #[arg(long)]
    pub pretrain_buffer: Option<PathBuf>,
    /// Gradient steps on the warm buffer before the first episode
    /// (overrides the config).
    #[arg(long)]
    pub pretrain_iters: Option<usize>,
    /// Overwrite existing outputs.
    #[arg(long)]
    pub force: bool,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Scenario batch JSON.
    #[arg(long)]
    pub batch: PathBuf,
    /// Output directory (records.csv, metrics.csv, effective config).
    #[arg(long)]
    pub out: PathBuf,
    /// Run configuration TOML; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated controllers: ftg, hybrid-astar, or checkpoint paths.
    #[arg(long)]
    pub controllers: Option<String>,
    /// Evaluate only the first N scenarios of the batch.
    #[arg(long)]
    pub maps: Option<usize>,
    /// Episodes per controller/scenario pair.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Run seed; each stage draws a decorrelated substream from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Overwrite existing outputs.
    #[arg(long)]
    pub force: bool,
}

#[derive(Args)]
pub struct RenderArgs {
    /// Scenario batch JSON.
    #[arg(long)]
    pub batch: PathBuf,
    /// Scenario id within the batch.
    #[arg(long)]
    pub id: String,
    /// Output SVG file.
    #[arg(long)]
    pub out: PathBuf,
    /// Overlay this trajectory CSV on the drawing.
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    /// Overwrite an existing SVG.
    #[arg(long)]
    pub force: bool,
}

#[derive(Args)]
pub struct GenDemosArgs {
    /// Scenario batch JSON.
    #[arg(long)]
    pub batch: PathBuf,
    /// Output replay buffer file.
    #[arg(long)]
    pub out: PathBuf,
    /// Run configuration TOML; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overwrite an existing buffer file.
    #[arg(long)]
    pub force: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("error: configuring {jobs} worker threads: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Gen(args) => commands::gen(args),
        Command::Replay(args) => commands::replay(args),
        Command::Train(args) => commands::train(args),
        Command::Eval(args) => commands::eval(args),
        Command::Render(args) => commands::render(args),
        Command::GenDemos(args) => commands::gen_demos(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
