//! `netdisco` command line: simulate benchmark task families, compute and
//! cache family scores, run edge-posterior discovery in any mode, and
//! evaluate results against a ground truth.
//!
//! Exit codes: 0 success, 2 usage error, 3 data/validation error,
//! 4 resource ceiling.

mod cache;
mod discover;
mod eval;
mod manifest;
mod score;
mod simulate;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "netdisco", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate related task families from a benchmark network
    Simulate(simulate::SimulateArgs),
    /// Compute family scores for one data file and cache them
    Score(score::ScoreArgs),
    /// Compute edge posteriors (single-task, multitask, or pooled)
    Discover(discover::DiscoverArgs),
    /// Score estimated posteriors against a ground truth
    Eval(eval::EvalArgs),
}

/// An error with the process exit code it maps to.
pub struct CliError {
    pub code: i32,
    pub source: anyhow::Error,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self { code: 2, source: anyhow::anyhow!(msg.into()) }
    }

    pub fn data(source: impl Into<anyhow::Error>) -> Self {
        Self { code: 3, source: source.into() }
    }

    pub fn ceiling(source: impl Into<anyhow::Error>) -> Self {
        Self { code: 4, source: source.into() }
    }
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::data(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn init_threads() {
    if let Ok(spec) = std::env::var("NETDISCO_THREADS") {
        match spec.parse::<usize>() {
            Ok(t) if t > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
                    log::warn!("could not size the thread pool: {e}");
                }
            }
            _ => log::warn!("ignoring NETDISCO_THREADS={spec}: not a positive integer"),
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    init_threads();
    let cli = Cli::parse();
    let argv: Vec<String> = std::env::args().collect();
    let result = match cli.command {
        Command::Simulate(args) => simulate::run(args, &argv),
        Command::Score(args) => score::run(args, &argv),
        Command::Discover(args) => discover::run(args, &argv),
        Command::Eval(args) => eval::run(args, &argv),
    };
    match result {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {:#}", e.source);
            std::process::exit(e.code);
        }
    }
}
