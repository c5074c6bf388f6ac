//! `hhg`: run lattice simulations, Wigner snapshots, harmonic spectra and
//! oracle comparisons from a JSON config.
//!
//! Exit codes: 0 success, 1 I/O, 2 config, 3 norm drift, 4 integrator or
//! truncation failure, 5 oracle threshold exceeded. Failures print one
//! `error=<kind> ...` line on stderr.

mod commands;
mod config;
mod error;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{load_value, parse_run, parse_sweep};
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "hhg", version, about = "Quantized-field high-harmonic generation on a coherent-state lattice")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dipole, norm and branch populations over time.
    Simulate(Common),
    /// Wigner function of the field at `wigner_times`.
    Wigner(Common),
    /// Harmonic spectrum of the dipole and its plateau features.
    Spectrum(Common),
    /// Lattice run against the photon-number-basis oracle.
    OracleCompare(Common),
    /// Spectra for a list of configs, run concurrently.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Override a config entry, e.g. `--set model.alpha0.re=4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory; defaults to the config's `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn out_dir(args: &Common, default: &str) -> PathBuf {
    args.out.clone().unwrap_or_else(|| Path::new(default).to_path_buf())
}

fn single(args: &Common) -> Result<(config::RunConfig, PathBuf), CliError> {
    let mut cfg = parse_run(load_value(&args.config, &args.set)?)?;
    if let Some(o) = &args.out {
        cfg.out_dir = o.display().to_string();
    }
    let out = out_dir(args, &cfg.out_dir);
    Ok((cfg, out))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => {
            let (cfg, out) = single(&a)?;
            commands::simulate(&cfg, &out)
        }
        Command::Wigner(a) => {
            let (cfg, out) = single(&a)?;
            commands::wigner(&cfg, &out)
        }
        Command::Spectrum(a) => {
            let (cfg, out) = single(&a)?;
            commands::spectrum(&cfg, &out).map(|_| ())
        }
        Command::OracleCompare(a) => {
            let (cfg, out) = single(&a)?;
            commands::oracle_compare(&cfg, &out)
        }
        Command::Sweep(a) => {
            let cfgs = parse_sweep(load_value(&a.config, &a.set)?)?;
            let out = out_dir(&a, &cfgs[0].out_dir);
            commands::sweep(&cfgs, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
