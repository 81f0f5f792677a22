//! Pursuit-evasion trainer and evaluator for heterogeneous robot teams.

use clap::{Parser, Subcommand};
use pursuit_arena::cli::{
    cmd_eval, cmd_inspect, cmd_plotdata, cmd_train, EvalArgs, InspectArgs, PlotdataArgs, TrainArgs,
};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "pursuit",
    about = "2D pursuit-evasion simulator and multi-agent actor-critic trainer",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train policies on a scenario and write metrics + checkpoints.
    Train {
        /// Scenario TOML file.
        #[arg(long)]
        config: PathBuf,
        /// Output run directory.
        #[arg(long)]
        out: PathBuf,
        /// Override train.seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Train the no-proficiency baseline (zero position rewards,
        /// homogenized observation ranges).
        #[arg(long)]
        ablate_proficiency: bool,
    },
    /// Evaluate a checkpoint noise-free and report metrics.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Evaluation episodes per seed.
        #[arg(long)]
        episodes: usize,
        /// Comma-separated evaluation seeds.
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long)]
        ablate_proficiency: bool,
        /// Directory for eval.csv (default: current directory).
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Export smoothed learning-curve data with a 95% band across runs.
    Plotdata {
        /// Run directories produced by `train`.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Moving-average window (episodes).
        #[arg(long, default_value_t = 1)]
        window: usize,
        /// Output CSV path.
        #[arg(long, default_value = "plotdata.csv")]
        out: PathBuf,
    },
    /// Validate a scenario file and print a summary.
    Inspect {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Train {
            config,
            out,
            seed,
            ablate_proficiency,
        } => cmd_train(&TrainArgs {
            config,
            out,
            seed,
            ablate_proficiency,
        }),
        Command::Eval {
            config,
            checkpoint,
            episodes,
            seeds,
            ablate_proficiency,
            out,
        } => cmd_eval(&EvalArgs {
            config,
            checkpoint,
            episodes,
            seeds,
            ablate_proficiency,
            out,
        }),
        Command::Plotdata { runs, window, out } => cmd_plotdata(&PlotdataArgs { runs, window, out }),
        Command::Inspect { config } => cmd_inspect(&InspectArgs { config }),
    };
    std::process::exit(code);
}
