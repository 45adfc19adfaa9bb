//! Manifest-driven front end for the spectral toolkit.
//!
//! One binary, four commands, all selected inside the TOML manifest so a run
//! is reproducible from a single file: `simulate` integrates seeded band
//! data and archives trajectory samples, `decay-fit` measures decay rates
//! against their predictions, `check-inequalities` sweeps the analysis
//! battery, and `spectrum` tabulates the linearized eigenvalues. Exit code 0
//! means every verdict passed; 1 is a run or verdict failure; 2 is a usage
//! error.

mod checks;
mod manifest;
mod runs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use manifest::{CliError, Command, Overrides};

#[derive(Parser)]
#[command(name = "nsk", version, about = "Pseudo-spectral runs for a capillary fluid model")]
struct Cli {
    /// TOML manifest describing the run.
    #[arg(long)]
    manifest: PathBuf,
    /// Override the manifest seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of concurrent experiments.
    #[arg(long)]
    jobs: Option<usize>,
    /// Override the output directory.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let resolved = manifest::load(
        &cli.manifest,
        &Overrides {
            seed: cli.seed,
            jobs: cli.jobs,
            output: cli.output,
        },
    )?;
    std::fs::create_dir_all(&resolved.output_dir)
        .map_err(|e| CliError::Run(format!("create {}: {e}", resolved.output_dir.display())))?;
    resolved.write_archive()?;
    println!(
        "{} (seed {}) -> {}",
        resolved.command.name(),
        resolved.seed,
        resolved.output_dir.display()
    );
    match resolved.command {
        Command::Simulate => runs::simulate(&resolved),
        Command::DecayFit => runs::decay_fit(&resolved),
        Command::Spectrum => runs::spectrum(&resolved),
        Command::CheckInequalities => {
            let draws = resolved.checks.draws;
            let verdicts = checks::battery(resolved.seed, draws, resolved.jobs)?;
            runs::print_verdicts(&verdicts);
            runs::write_verdicts(&resolved.output_dir.join("checks.csv"), &verdicts)?;
            Ok(runs::all_pass(&verdicts))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more verdicts failed");
            ExitCode::from(1)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Run(msg)) => {
            eprintln!("run failed: {msg}");
            ExitCode::from(1)
        }
    }
}
