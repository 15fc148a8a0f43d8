mod cmd;
mod config;
mod svg;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Settings;

/// cWGAN-GP augmentation toolkit for CSI amplitude data.
#[derive(Parser, Debug)]
#[command(name = "csigan", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
pub struct Common {
    /// Settings file: `key = value` lines under `[section]` headers. Flags win.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Seed for every random choice the command makes.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (synth, generate) or directory (train, eval, report).
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a deterministic synthetic corpus as a CSI4DATA file.
    Synth(cmd::synth::SynthArgs),
    /// Train the cWGAN-GP (or the BCE baseline) and save checkpoints, logs and samples.
    Train(cmd::train::TrainArgs),
    /// Draw class-balanced synthetic samples from a generator checkpoint.
    Generate(cmd::generate::GenerateArgs),
    /// Score GAN-train, GAN-test, baseline and augmented accuracy.
    Eval(cmd::eval::EvalArgs),
    /// Merge evaluation reports of several runs into one table and chart.
    Report(cmd::report::ReportArgs),
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or settings (exit 2).
    Usage(String),
    /// Inputs that violate a data contract (exit 4).
    Contract(String),
    Core(csigan::error::Error),
    /// Writing an output failed (exit 1).
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use csigan::error::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Contract(_) => 4,
            CliError::Io(_) => 1,
            CliError::Core(e) => match e {
                E::Divergence { .. } | E::Numeric(_) => 3,
                E::Capability(_) => 1,
                _ => 4,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Contract(m) => write!(f, "data contract: {m}"),
            CliError::Core(csigan::error::Error::Divergence { iteration, what }) => {
                write!(f, "training diverged at iteration {iteration}: {what}")
            }
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(m) => write!(f, "{m}"),
        }
    }
}

impl From<csigan::error::Error> for CliError {
    fn from(e: csigan::error::Error) -> Self {
        CliError::Core(e)
    }
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

pub fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))
}

/// `CSI4_THREADS` caps the worker pool used by `eval` and `report`.
fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("CSI4_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| CliError::Usage(format!("CSI4_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size the thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Synth(a) => {
            let s = Settings::load(a.common.config.as_deref())?;
            cmd::synth::run(a, s)
        }
        Command::Train(a) => {
            let s = Settings::load(a.common.config.as_deref())?;
            cmd::train::run(a, s)
        }
        Command::Generate(a) => {
            let s = Settings::load(a.common.config.as_deref())?;
            cmd::generate::run(a, s)
        }
        Command::Eval(a) => {
            let s = Settings::load(a.common.config.as_deref())?;
            cmd::eval::run(a, s)
        }
        Command::Report(a) => {
            let s = Settings::load(a.common.config.as_deref())?;
            cmd::report::run(a, s)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
