//! `drivecast`: synthetic data, preparation, training and evaluation from
//! the command line.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

mod commands;
mod settings;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use settings::{Settings, SettingsArgs};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] drivecast::Error),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "drivecast", version, about = "Multi-horizon speed and steering forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    settings: SettingsArgs,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic recording (CAN CSV, frames, manifest)
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Window, filter and split recordings into train/test sample stores
    Prepare {
        /// A manifest, a recording directory, or a directory of recordings
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a prepared train store
    Train {
        /// A prepared directory or a sample store file
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Report MAE, RMSE and the steering MAE@alpha sweep on a test store
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Steering MAE@alpha sweep; the constant-zero predictor without a checkpoint
    SweepAlpha {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train mh-sim-lstm with and without the video encoder and compare
    AblateVision {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let s = Settings::resolve(&cli.settings)?;
    match cli.command {
        Command::Synth { out } => {
            let manifest = commands::synth(&s, &out)?;
            println!("{}", manifest.display());
        }
        Command::Prepare { data, out } => {
            let r = commands::prepare(&s, &data, &out)?;
            println!("train samples: {}, test samples: {}", r.train, r.test);
        }
        Command::Train { data, out } => {
            let r = commands::train_model(&s, &data, &out)?;
            println!("epoch 1 loss: {}", r.first_loss);
            println!("final epoch loss: {}", r.final_loss);
            println!("checkpoint: {}", r.checkpoint.display());
        }
        Command::Evaluate { checkpoint, data, out } => {
            let r = commands::evaluate(&s, &checkpoint, &data, &out)?;
            println!("steering MAE: {} {}", r.steering_mae, r.unit);
            println!("speed MAE: {} m/s", r.speed_mae);
        }
        Command::SweepAlpha { checkpoint, data, out } => {
            let path = commands::sweep(&s, checkpoint.as_deref(), &data, &out)?;
            println!("{}", path.display());
        }
        Command::AblateVision { data, out } => {
            let [speed, steering] = commands::ablate(&s, &data, &out)?;
            println!("speed MAE ratio (with/without vision): {speed}");
            println!("steering MAE ratio (with/without vision): {steering}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
