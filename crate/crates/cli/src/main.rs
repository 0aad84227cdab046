use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use embedpoison::Error;

mod commands;
mod config;

#[derive(Parser, Debug)]
#[command(name = "embedpoison", version, about = "Poisoning attacks on matrix-factorization node embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Hold out edges and sampled non-edges for link prediction.
    Split(SplitArgs),
    /// Compute one perturbation with the gradient attack or a baseline.
    Attack(AttackArgs),
    /// Score a clean or poisoned training graph on a split.
    Evaluate(EvaluateArgs),
    /// Run a full experiment grid from a TOML config.
    Experiment(ExperimentArgs),
    /// Write a stochastic-block-model edge list.
    GenerateSbm(SbmArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct ProxArgs {
    /// deepwalk or line2
    #[arg(long)]
    pub method: Option<String>,
    /// Context window T (DeepWalk).
    #[arg(long)]
    pub window: Option<usize>,
    /// Negative samples b.
    #[arg(long = "neg")]
    pub negatives: Option<f64>,
    /// Embedding dimension.
    #[arg(long)]
    pub dim: Option<usize>,
    /// ALS ridge.
    #[arg(long)]
    pub ridge: Option<f64>,
    /// ALS sweep cap.
    #[arg(long)]
    pub sweeps: Option<usize>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct PgdArgs {
    #[arg(long)]
    pub iters: Option<usize>,
    /// Initial step size.
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub refactor_every: Option<usize>,
    /// Round to the budget every k iterations.
    #[arg(long)]
    pub project_every: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, default_value_t = 0.15)]
    pub holdout: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AttackArgs {
    #[arg(long)]
    pub graph: PathBuf,
    /// Split JSON; the training graph is attacked. Availability attacks
    /// without one split on the fly.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, default_value_t = 0.15)]
    pub holdout: f64,
    /// opt, random, ppr, degree_sum or shortest_path
    #[arg(long, default_value = "opt")]
    pub attack: String,
    /// integrity or availability
    #[arg(long)]
    pub goal: String,
    /// Target pair as two node ids from the edge list, "u,v".
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long, default_value = "up")]
    pub direction: String,
    /// direct, indirect or none
    #[arg(long, default_value = "none")]
    pub constraint: String,
    #[arg(long)]
    pub action: String,
    #[arg(long)]
    pub budget: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = embedpoison::baseline::DEFAULT_RESTART)]
    pub restart: f64,
    #[command(flatten)]
    pub prox: ProxArgs,
    #[command(flatten)]
    pub pgd: PgdArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    /// Attack outputs to evaluate; none scores the clean graph only.
    #[arg(long = "perturbation")]
    pub perturbations: Vec<PathBuf>,
    /// Prefix lengths to evaluate; defaults to each perturbation's length.
    #[arg(long, value_delimiter = ',')]
    pub budgets: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub prox: ProxArgs,
    /// Output directory for report.json and report.csv.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub budgets: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[command(flatten)]
    pub prox: ProxArgs,
    #[command(flatten)]
    pub pgd: PgdArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct SbmArgs {
    #[arg(long)]
    pub blocks: usize,
    #[arg(long)]
    pub block_size: usize,
    #[arg(long)]
    pub p_in: f64,
    #[arg(long)]
    pub p_out: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Infeasible { .. } | Error::Split(_) => 3,
        Error::Numeric(_) => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Split(a) => commands::split(&a),
        Command::Attack(a) => commands::attack(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Experiment(a) => commands::experiment(&a),
        Command::GenerateSbm(a) => commands::generate_sbm(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
