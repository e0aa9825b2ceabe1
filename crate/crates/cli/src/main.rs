//! `revspam`: run the deceptive-review pipeline stage by stage from a TOML config.

mod config;
mod manifest;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ConfigErrors, Loaded};
use manifest::MissingArtifact;
use stages::Protocol;

#[derive(Parser)]
#[command(name = "revspam", version, about = "Deceptive review detection pipeline")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate and normalize reviews, products and root tasks.
    Ingest,
    /// Label reviewers with the pairwise MRF and hard EM.
    Cluster,
    /// Apply the reviewer/product sieve and write corpus statistics.
    Sieve,
    /// Build the feature space and vectorize the labeled reviews.
    Featurize,
    /// Train the maximum-entropy classifier on all vectors.
    Train,
    /// Run an evaluation protocol.
    Eval {
        #[arg(value_enum)]
        protocol: Protocol,
    },
    /// Collect all evaluation reports into one summary.
    Report,
    /// Print per-review syntactic complexity as CSV.
    Complexity,
}

const EXIT_FAILURE: u8 = 1;
const EXIT_MISSING_ARTIFACT: u8 = 2;
const EXIT_CONFIG: u8 = 3;

fn run(cli: &Cli) -> anyhow::Result<()> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| ConfigErrors(vec!["--config PATH is required".into()]))?;
    let cfg = Loaded::load(path, cli.seed, cli.out.as_deref())?;
    match &cli.command {
        Command::Ingest => stages::ingest(&cfg),
        Command::Cluster => stages::cluster(&cfg),
        Command::Sieve => stages::sieve(&cfg),
        Command::Featurize => stages::featurize(&cfg),
        Command::Train => stages::train(&cfg),
        Command::Eval { protocol } => stages::eval(&cfg, *protocol),
        Command::Report => stages::report(&cfg),
        Command::Complexity => stages::complexity(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(m) = e.downcast_ref::<MissingArtifact>() {
                eprintln!("error: {m}");
                ExitCode::from(EXIT_MISSING_ARTIFACT)
            } else if let Some(c) = e.downcast_ref::<ConfigErrors>() {
                eprint!("error: {c}");
                ExitCode::from(EXIT_CONFIG)
            } else {
                eprintln!("error: {e:#}");
                ExitCode::from(EXIT_FAILURE)
            }
        }
    }
}
