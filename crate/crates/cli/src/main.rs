//! `diffrec`: ingest raw data, train influence embeddings and the
//! recommender, evaluate, and dump attention weights.
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::Config;

/// A configuration or usage problem; exits with code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "diffrec", version, about = "Diffusion-aware news recommendation pipeline")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// `section.key=value` override; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Before training, compare analytic and finite-difference gradients on
    /// one batch and report the largest relative error.
    #[arg(long, global = true)]
    grad_check: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse raw files and write a normalized corpus plus stats.json.
    Ingest,
    /// Train influence embeddings on pre-test cascades.
    TrainInfluence,
    /// Train the recommender and write a checkpoint.
    Train,
    /// Score the test split and write report.json.
    Evaluate {
        /// Also write attention weights to this JSON-lines file.
        #[arg(long)]
        attention: Option<PathBuf>,
    },
    /// Write per-news attention weights for test impressions.
    DumpAttention {
        /// Output file; defaults to attention.jsonl in the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let mut config = Config::load(cli.config.as_deref(), &cli.overrides)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    match &cli.command {
        Command::Ingest => commands::ingest(&config),
        Command::TrainInfluence => commands::train_influence(&config),
        Command::Train => commands::train(&config, cli.grad_check),
        Command::Evaluate { attention } => commands::evaluate_cmd(&config, attention.as_deref()),
        Command::DumpAttention { out } => commands::dump_attention_cmd(&config, out.as_deref()),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<diffrec_core::error::Error>() {
        Some(diffrec_core::error::Error::Config(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
