//! `sgnn-explain`: data generation, classifier training, explainer training
//! and evaluation, each driven by flags plus one TOML run config.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

// glibc malloc maps and unmaps every large tape buffer; mimalloc reuses them
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(name = "sgnn-explain", version, about = "Edge-mask explanations for subgraph GNNs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate BA-2motifs as a TU store, or validate a TU directory.
    GenData {
        /// `ba2motifs` or the path of a TU directory.
        #[arg(long)]
        dataset: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Number of BA-2motifs graphs (default 1000).
        #[arg(long)]
        num_graphs: Option<usize>,
    },
    /// Train a subgraph classifier or the GIN baseline.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the explainer against a frozen checkpoint and write explanations.
    Explain {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score explanation directories and aggregate them into a report.
    Evaluate {
        #[arg(long = "explanations", required = true)]
        explanations: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// An error with its exit code: 2 for usage or configuration problems, 3 for
/// failures while running.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl From<sgnn_explain::Error> for Failure {
    fn from(e: sgnn_explain::Error) -> Self {
        use sgnn_explain::Error as E;
        let code = match e {
            E::Argument(_) | E::Format { .. } | E::Io { .. } => 2,
            _ => 3,
        };
        Self { code, message: e.to_string() }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData { dataset, seed, out, num_graphs } => commands::gen_data(&dataset, seed, &out, num_graphs),
        Command::Train { config, out } => commands::train(&config, &out),
        Command::Explain { config, model, out } => commands::explain(&config, &model, &out),
        Command::Evaluate { explanations, out } => commands::evaluate(&explanations, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
