//! `regnn`: simulate data, fit classical and neural moderation models,
//! and emit the tables behind every figure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use regnn::Error;

use config::{Overrides, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "regnn", version, about = "Regression-guided neural networks for moderation analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset with known moderation structure
    Simulate(Flags),
    /// Fit the full moderated multiple regression
    FitMmr(Flags),
    /// Train the composite model and evaluate the twin regression
    Train(Flags),
    /// Write the learned index for every row
    Index(Flags),
    /// Partial-dependence importance and ALE curves of the index
    Explain(Flags),
    /// Predicted outcome over the focal range by index percentile group
    Margins(Flags),
    /// Full MMR versus twin model comparison bundle
    Report(Flags),
}

#[derive(Debug, Args)]
struct Flags {
    /// JSON run configuration; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Trained model checkpoint
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    /// Training fraction of the train/test split
    #[arg(long)]
    split: Option<f64>,
    /// ALE quantile bins
    #[arg(long)]
    bins: Option<usize>,
    /// Rows sampled for partial dependence
    #[arg(long)]
    samples: Option<usize>,
}

impl Flags {
    fn resolve(self) -> regnn::Result<RunConfig> {
        let overrides = Overrides {
            seed: self.seed,
            data: self.data,
            schema: self.schema,
            out: self.out,
            checkpoint: self.checkpoint,
            epochs: self.epochs,
            lr: self.lr,
            dropout: self.dropout,
            split: self.split,
            bins: self.bins,
            samples: self.samples,
        };
        RunConfig::resolve(self.config.as_deref(), overrides)
    }
}

fn run(command: Command) -> regnn::Result<()> {
    match command {
        Command::Simulate(f) => commands::simulate(&f.resolve()?),
        Command::FitMmr(f) => commands::fit_mmr(&f.resolve()?),
        Command::Train(f) => commands::train(&f.resolve()?),
        Command::Index(f) => commands::index(&f.resolve()?),
        Command::Explain(f) => commands::explain(&f.resolve()?),
        Command::Margins(f) => commands::margins_cmd(&f.resolve()?),
        Command::Report(f) => commands::report(&f.resolve()?),
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        e if e.is_config() => 2,
        Error::Io(_) | Error::Json(_) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("REGNN_LOG", "info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match std::panic::catch_unwind(|| run(cli.command)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(_) => {
            eprintln!("error: internal failure");
            ExitCode::from(4)
        }
    }
}
