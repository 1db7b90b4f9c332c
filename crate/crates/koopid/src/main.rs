use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use koopid::commands::{self, EXIT_CONFIG};
use koopid::Experiment;

#[derive(Parser)]
#[command(name = "koopid", version, about = "Finite-time Koopman identification and library search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Identify the lifted model for the configured library.
    Identify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bayesian search over libraries.
    Meta {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `meta.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score every library in the design space.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

fn load(path: &Path) -> Result<Experiment, ExitCode> {
    Experiment::load(path).map_err(|e| {
        eprintln!("koopid: {}: {e}", path.display());
        ExitCode::from(EXIT_CONFIG as u8)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Identify { config, out } => match load(&config) {
            Ok(exp) => commands::identify(&exp, &out),
            Err(code) => return code,
        },
        Command::Meta { config, out, seed } => match load(&config) {
            Ok(exp) => {
                let exp = match seed {
                    Some(s) => exp.with_seed(s),
                    None => exp,
                };
                commands::meta(&exp, &out)
            }
            Err(code) => return code,
        },
        Command::Oracle { config, out, jobs } => match load(&config) {
            Ok(exp) => commands::oracle(&exp, &out, jobs),
            Err(code) => return code,
        },
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("koopid: {e:#}");
            ExitCode::from(EXIT_CONFIG as u8)
        }
    }
}
