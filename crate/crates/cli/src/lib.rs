//! Command-line front end for the `jofc` library.
//!
//! Every subcommand reads defaults, then an optional TOML file (root keys and
//! a per-mode section), then flags. Results are written as CSV into `--out`.

pub mod commands;
pub mod config;
pub mod error;
pub mod holdout;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::{ConfigFile, ExperimentSpec, Mode, Overrides};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "jofc", version, about = "Joint embedding experiments for matched-pair testing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML file with root keys and optional per-mode sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub flags: Overrides,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Sample Gaussian-setting trials and write their matrices.
    Simulate,
    /// Monte Carlo AUC and power over a grid of w.
    Sweep,
    /// Joint embedding of two observed matrices.
    Embed,
    /// Test statistics for new pairs against an embedding.
    Oos,
    /// Leave-two-out matched/unmatched statistics on observed data.
    Holdout,
    /// Procrustes-after-MDS baseline on the Gaussian setting.
    Baseline,
    /// Scree plot and elbow choice of dimension.
    Dimselect,
}

impl Command {
    pub fn mode(self) -> Mode {
        match self {
            Command::Simulate => Mode::Simulate,
            Command::Sweep => Mode::Sweep,
            Command::Embed => Mode::Embed,
            Command::Oos => Mode::Oos,
            Command::Holdout => Mode::Holdout,
            Command::Baseline => Mode::Baseline,
            Command::Dimselect => Mode::Dimselect,
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let file = cli.config.as_deref().map(ConfigFile::load).transpose()?;
    let spec = ExperimentSpec::resolve(cli.command.mode(), file.as_ref(), &cli.flags)?;
    commands::run(&spec)
}

/// Parses `args` and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
