//! `iconify`: prepare domains, train, convert images, render contact sheets
//! and verify gradients.

mod convert;
mod exit;
mod grid;
mod prepare;
mod train;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use exit::{CmdResult, Failure};

#[derive(Parser)]
#[command(name = "iconify", version, about = "Unpaired photo-to-icon translation")]
struct Cli {
    /// Run configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 gives the reference single-threaded behaviour.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Where all outputs go.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Only errors on stderr.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build domain directories from annotations, icons and logos.
    Prepare(prepare::Args),
    /// Train a model according to a run configuration.
    Train(train::Args),
    /// Translate images with a trained checkpoint.
    Iconify(convert::Args),
    /// Tile images into a comparison sheet.
    Grid(grid::Args),
    /// Run the gradient-check and convolution-oracle suites.
    Verify(verify::Args),
}

/// Options shared by every command.
pub struct Globals {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

impl Globals {
    pub fn output_dir_or(&self, default: &str) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from(default))
    }
}

fn init_logging(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Info,
        (false, 1) => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .init();
}

fn run(cli: Cli) -> CmdResult {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::usage(anyhow::anyhow!("--threads must be >= 1")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(Failure::failed)?;
    }
    let globals = Globals {
        config: cli.config,
        seed: cli.seed,
        output_dir: cli.output_dir,
    };
    match cli.command {
        Command::Prepare(a) => prepare::run(&globals, a),
        Command::Train(a) => train::run(&globals, a),
        Command::Iconify(a) => convert::run(&globals, a),
        Command::Grid(a) => grid::run(&globals, a),
        Command::Verify(a) => verify::run(&globals, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose, cli.quiet);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            error!("{f}");
            ExitCode::from(f.code)
        }
    }
}
