//! `dualrep`: build indexes, search, evaluate and compare runs, and explain
//! late-interaction scores.

mod artifacts;
mod evaluate;
mod explain;
mod index;
mod search;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "dualrep",
    version,
    about = "Single- vs multi-representation dense retrieval toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a BM25, single-representation or multi-representation index.
    Index(index::IndexArgs),
    /// Run queries against an index and write a TREC run file.
    Search(search::SearchArgs),
    /// Score one run against relevance judgments.
    Evaluate(evaluate::EvaluateArgs),
    /// Compare runs against a baseline: significance, difficulty classes,
    /// reward/risk and per-query deltas.
    Compare(evaluate::CompareArgs),
    /// Dump the query/passage token interaction behind a multi-representation score.
    Explain(explain::ExplainArgs),
}

/// Bad input detected by the CLI itself; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[macro_export]
macro_rules! usage {
    ($($arg:tt)*) => {
        anyhow::Error::new($crate::UsageError(format!($($arg)*)))
    };
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<dualrep::Error>() {
        Some(e) if e.is_validation() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Index(args) => index::run(args),
        Command::Search(args) => search::run(args),
        Command::Evaluate(args) => evaluate::run_evaluate(args),
        Command::Compare(args) => evaluate::run_compare(args),
        Command::Explain(args) => explain::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
