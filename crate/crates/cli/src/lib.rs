//! Command-line driver for the knowledge-infused learning pipeline.
//!
//! Every command is also a library function, so the pipeline can be driven
//! from tests or other programs without spawning a process.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{Mode, PipelineConfig};
pub use error::CliError;

use commands::build::BuildStatus;
use commands::Context;

#[derive(Debug, Parser)]
#[command(name = "kinfuse", version, about = "Knowledge-infused text classification")]
pub struct Cli {
    /// Pipeline configuration file.
    #[arg(long, global = true, default_value = "kinfuse.toml")]
    pub config: PathBuf,
    /// Training mode; overrides `run.mode`.
    #[arg(long, global = true, value_enum)]
    pub mode: Option<Mode>,
    /// Master random seed; overrides `train.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Artifact directory (default: `build/` next to the config file).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load the graph and corpora, train dimension models, extract the seeded sub-graph.
    Build,
    /// Train a classifier (vanilla or infused) on the training set.
    Train,
    /// Evaluate the trained classifier of the current mode.
    Eval {
        /// Labelled dataset to evaluate on (default: `paths.test`).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Train and evaluate both modes over several seeds and report mean ± std.
    Compare {
        /// Number of seeds (default: `compare.runs`).
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Grow the seeded sub-graph from the classifier's training errors.
    UpdateKg,
    /// Check analytic gradients against central finite differences.
    Gradcheck {
        /// Hidden and input width of the probe model.
        #[arg(long, default_value_t = 4)]
        width: usize,
    },
    /// Write the synthetic sparse-signal benchmark into `--out`.
    Synth,
}

/// Runs one command and returns the text to print on success.
pub fn run(cli: Cli) -> Result<String, CliError> {
    let context = || Context::new(&cli.config, cli.out.clone(), cli.seed, cli.mode);
    match &cli.command {
        Command::Build => {
            let ctx = context()?;
            let summary = commands::build::build(&ctx)?;
            Ok(match summary.status {
                BuildStatus::UpToDate => "up to date".to_string(),
                BuildStatus::Built => format!(
                    "built {} artifacts in {}",
                    summary.manifest.outputs.len(),
                    ctx.out.display()
                ),
            })
        }
        Command::Train => {
            let ctx = context()?;
            let s = commands::train::cmd_train(&ctx)?;
            Ok(format!(
                "{}{}",
                commands::train::training_log(&s.outcome, ctx.mode, ctx.seed),
                format_args!("checkpoint {}", s.checkpoint.display())
            ))
        }
        Command::Eval { data } => {
            let ctx = context()?;
            Ok(commands::eval::cmd_eval(&ctx, data.clone())?.to_text())
        }
        Command::Compare { runs } => {
            let ctx = context()?;
            Ok(commands::compare::cmd_compare(&ctx, *runs)?.to_text())
        }
        Command::UpdateKg => {
            let ctx = context()?;
            Ok(commands::update_kg::cmd_update_kg(&ctx)?.audit_line())
        }
        Command::Gradcheck { width } => {
            let summary = commands::gradcheck::gradcheck(*width, cli.seed.unwrap_or(0))?;
            let text = summary.to_text();
            if summary.max_rel_error() < commands::gradcheck::TOLERANCE {
                Ok(text)
            } else {
                Err(CliError::Runtime(format!("gradient check failed\n{text}")))
            }
        }
        Command::Synth => {
            let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("synth"));
            let s = commands::synth::synth(&dir, cli.seed.unwrap_or(0))?;
            Ok(format!(
                "wrote {} concepts, {} triples, {} training and {} test documents to {}",
                s.concepts,
                s.triples,
                s.train_docs,
                s.test_docs,
                dir.display()
            ))
        }
    }
}
