//! `ssmreg` command-line tool.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::CliError;

#[derive(Parser)]
#[command(name = "ssmreg", version, about = "Statistical shape model registration of oriented point clouds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
pub struct Common {
    /// JSON configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, default_value = ".")]
    pub output: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Confidence ladder probabilities [default: 0.95,0.9975,0.9999,0.999999].
    #[arg(long)]
    pub p_ladder: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Build a PCA shape model from meshes in vertex correspondence.
    BuildSsm {
        #[command(flatten)]
        common: Common,
        /// ASCII PLY meshes; appended to those listed in the config.
        meshes: Vec<PathBuf>,
    },
    /// Register one oriented point cloud to a shape model.
    Register {
        #[command(flatten)]
        common: Common,
        /// Shape model JSON (overrides the config).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Point cloud CSV with header x,y,z,nx,ny,nz (overrides the config).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Number of shape modes.
        #[arg(long)]
        modes: Option<usize>,
    },
    /// Run the leave-one-out experiment on a synthetic corpus.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Master seed; every random draw derives from it.
        #[arg(long)]
        seed: u64,
        /// Comma-separated mode counts (overrides the config).
        #[arg(long, value_delimiter = ',')]
        modes: Option<Vec<usize>>,
        /// Record wall time per registration.
        #[arg(long)]
        timing: bool,
    },
    /// Summarize one or more trial CSVs.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(required = true)]
        trials: Vec<PathBuf>,
    },
    /// Write the synthetic corpus as PLY meshes.
    Corpus {
        #[command(flatten)]
        common: Common,
        /// Corpus seed.
        #[arg(long)]
        seed: u64,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::BuildSsm { common, meshes } => commands::build_ssm(&common, meshes),
        Command::Register {
            common,
            model,
            data,
            modes,
        } => commands::register(&common, model, data, modes),
        Command::Simulate {
            common,
            seed,
            modes,
            timing,
        } => commands::simulate(&common, seed, modes, timing),
        Command::Report { common, trials } => commands::report(&common, &trials),
        Command::Corpus { common, seed } => commands::corpus(&common, seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
