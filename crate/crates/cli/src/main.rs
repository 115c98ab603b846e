//! `dcf`: dataset generation, padding-scheme adaptation, training-pathway
//! search and explanation reports.
//!
//! Exit codes: 0 success, 1 runtime error, 2 configuration error,
//! 3 missing prerequisite.

mod commands;
mod config;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dcf_core::imaging::PaddingScheme;
use dcf_core::pathways::Setting;
use dcf_core::Error;

use crate::config::RunConfig;

#[derive(Parser)]
#[command(name = "dcf", version, about = "Padding-scheme adaptation and dual-direction training-pathway search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic datasets A and B.
    GenData {
        #[arg(long)]
        config: PathBuf,
        /// Dataset root; defaults to `data.root` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train zero-padded backbones on A and score every padding scheme.
    Psa {
        #[arg(long)]
        config: PathBuf,
        /// Train a separate backbone family per scheme.
        #[arg(long)]
        train_per_scheme: bool,
        /// Use 1024-pixel classifier inputs.
        #[arg(long)]
        paper_scale: bool,
    },
    /// Run the training pathways S1..S5 and choose one.
    Tps {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated subset, e.g. `1,2` or `S1,S4`.
        #[arg(long, value_delimiter = ',')]
        settings: Option<Vec<Setting>>,
        /// Padding scheme for all settings instead of the PSA choice.
        #[arg(long)]
        scheme: Option<PaddingScheme>,
        #[arg(long)]
        paper_scale: bool,
    },
    /// Mean-pixel/confidence tables, pixel histograms and GradCAM exports.
    Explain {
        #[arg(long)]
        config: PathBuf,
        /// Model checkpoint; relative paths are also tried inside the run directory.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        scheme: Option<PaddingScheme>,
        #[arg(long)]
        paper_scale: bool,
    },
    /// Print the stored summaries of a run directory.
    Report {
        #[arg(long)]
        run_dir: PathBuf,
    },
}

fn load(path: &Path, paper_scale: bool, train_per_scheme: bool) -> dcf_core::Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if paper_scale {
        cfg.set_paper_scale();
    }
    if train_per_scheme {
        cfg.psa.train_per_scheme = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn configure_threads() -> dcf_core::Result<()> {
    if let Ok(v) = std::env::var("DCF_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("DCF_THREADS must be a positive integer, got '{v}'")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot size thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> dcf_core::Result<()> {
    configure_threads()?;
    match cli.command {
        Command::GenData { config, out } => commands::gen_data(&load(&config, false, false)?, out),
        Command::Psa {
            config,
            train_per_scheme,
            paper_scale,
        } => commands::psa(&load(&config, paper_scale, train_per_scheme)?),
        Command::Tps {
            config,
            settings,
            scheme,
            paper_scale,
        } => commands::tps(&load(&config, paper_scale, false)?, settings, scheme),
        Command::Explain {
            config,
            checkpoint,
            scheme,
            paper_scale,
        } => commands::explain(&load(&config, paper_scale, false)?, &checkpoint, scheme),
        Command::Report { run_dir } => commands::report(&run_dir),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::MissingPrerequisite(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
