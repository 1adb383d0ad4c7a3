//! `disc`: dataset generation, training, inference, evaluation and fine-tuning.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use disc::DiscError;

#[derive(Parser)]
#[command(name = "disc", version, about = "Coarse-to-fine CNN saliency detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Phase {
    Coarse,
    Fine,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic dataset as `<out>/images` and `<out>/masks`.
    GenData {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        side: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one network and write a checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        phase: Phase,
        #[arg(long)]
        out_ckpt: Option<PathBuf>,
        /// Validate the configuration and layer shapes, then exit.
        #[arg(long)]
        dry_run: bool,
    },
    /// Write one 8-bit saliency PNG per input PNG.
    Infer {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score saliency maps against masks; writes a JSON report and a PR-curve CSV.
    Eval {
        #[arg(long)]
        maps: PathBuf,
        #[arg(long)]
        masks: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Continue training both networks of a checkpoint on a task dataset.
    Finetune {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_ckpt: PathBuf,
    },
}

/// Failure with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DIVERGED: u8 = 3;

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<DiscError> for CliError {
    fn from(e: DiscError) -> Self {
        let code = match e {
            DiscError::Diverged { .. } => EXIT_DIVERGED,
            _ => EXIT_USAGE,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenData { seed, count, side, out } => commands::gen_data(seed, count, side, &out),
        Command::Train {
            config,
            phase,
            out_ckpt,
            dry_run,
        } => commands::train(&config, phase, out_ckpt.as_deref(), dry_run),
        Command::Infer { ckpt, images, out } => commands::infer(&ckpt, &images, &out),
        Command::Eval { maps, masks, report } => commands::eval(&maps, &masks, &report),
        Command::Finetune { ckpt, config, out_ckpt } => commands::finetune(&ckpt, &config, &out_ckpt),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
