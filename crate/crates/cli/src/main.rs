mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{CommonArgs, TrainArgs};

/// A caller mistake: bad flag values, missing inputs, stale artifacts.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "dsi", version, about = "Generative code search: queries decoded straight into document ids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load a JSONL corpus, strip documentation, split queries, snapshot.
    Ingest {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        input: Option<std::path::PathBuf>,
        #[arg(long)]
        limit: Option<usize>,
        /// Fraction of each document's queries held out for testing.
        #[arg(long)]
        test_fraction: Option<f64>,
    },
    /// Assign a docid to every document of the snapshot.
    Assign {
        #[command(flatten)]
        common: CommonArgs,
        /// direct or clustered
        #[arg(long)]
        strategy: Option<String>,
        /// int or char
        #[arg(long)]
        structure: Option<String>,
        /// hashed or external
        #[arg(long)]
        embedder: Option<String>,
        /// JSONL of {"id", "vector"} rows for the external embedder.
        #[arg(long)]
        embeddings: Option<std::path::PathBuf>,
        #[arg(long)]
        embedding_dim: Option<usize>,
    },
    /// Train the retrieval model on the snapshot and its docids.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// per_symbol or merged
        #[arg(long)]
        target_mode: Option<String>,
    },
    /// Run the experiment matrix and write report.csv and report.json.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Comma-separated corpus sizes; defaults to the whole snapshot.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        /// Comma-separated strategy:structure cells, e.g. direct:int,clustered:char.
        #[arg(long, value_delimiter = ',')]
        strategies: Option<Vec<String>>,
        #[arg(long)]
        beam: Option<usize>,
        #[arg(long)]
        embedding_dim: Option<usize>,
    },
    /// Print the top-k documents for one query.
    Query {
        #[command(flatten)]
        common: CommonArgs,
        /// tfidf, de or dsi
        #[arg(long, default_value = "dsi")]
        method: String,
        #[arg(long = "q")]
        query: String,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        beam: Option<usize>,
        #[arg(long)]
        embedding_dim: Option<usize>,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<dsi_core::Error>() {
        Some(e) if e.is_validation() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest {
            common,
            input,
            limit,
            test_fraction,
        } => commands::ingest(&common, input, limit, test_fraction),
        Command::Assign {
            common,
            strategy,
            structure,
            embedder,
            embeddings,
            embedding_dim,
        } => commands::assign(&common, strategy, structure, embedder, embeddings, embedding_dim),
        Command::Train {
            common,
            train,
            target_mode,
        } => commands::train(&common, &train, target_mode),
        Command::Eval {
            common,
            train,
            sizes,
            strategies,
            beam,
            embedding_dim,
        } => commands::eval(&common, &train, sizes, strategies, beam, embedding_dim),
        Command::Query {
            common,
            method,
            query,
            k,
            beam,
            embedding_dim,
        } => commands::query(&common, &method, &query, k, beam, embedding_dim),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
