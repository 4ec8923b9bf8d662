//! `gpeps`: verification suites, convergence sweeps, state files and spectra
//! for fermionic Gaussian PEPS.

mod commands;
mod config;
mod failure;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Context;
use crate::config::ExperimentConfig;
use crate::failure::Failure;

#[derive(Parser)]
#[command(name = "gpeps", version, about = "Fermionic Gaussian PEPS experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the invariant suites; exit 0 iff every check passes.
    Verify(RunArgs),
    /// Sweep the step count of the exact construction into `converge.csv`.
    Converge(RunArgs),
    /// Contract the configured state and write it as a state file.
    Build(RunArgs),
    /// Write the BdG eigenvalues of the configured model to `spectrum.csv`.
    Spectrum(RunArgs),
    /// Rotation and charge residuals of a stored state.
    RotateCheck(CheckArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for independent sweep points; 0 uses all cores.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Tolerance override, repeatable.
    #[arg(long = "tol", value_name = "NAME=VALUE")]
    tol: Vec<String>,
}

#[derive(Args)]
struct CheckArgs {
    /// State file written by `build`.
    state: PathBuf,
    /// Directory for `rotate_check.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Tolerance override (`rotation` or `charge`), repeatable.
    #[arg(long = "tol", value_name = "NAME=VALUE")]
    tol: Vec<String>,
}

fn load(args: &RunArgs) -> Result<Context, Failure> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    cfg.apply_overrides(args.seed, args.workers, args.out.clone(), &args.tol)?;
    Ok(Context::new(cfg))
}

fn check_tolerances(tols: &[String]) -> Result<(f64, f64), Failure> {
    let (mut rotation, mut charge) = (1e-9, 1e-12);
    for t in tols {
        let (name, value) = t
            .split_once('=')
            .ok_or_else(|| Failure::Config(format!("--tol expects NAME=VALUE, got {t:?}")))?;
        let v: f64 = value
            .parse()
            .map_err(|_| Failure::Config(format!("tolerance {name} is not a number: {value:?}")))?;
        match name {
            "rotation" => rotation = v,
            "charge" => charge = v,
            _ => return Err(Failure::Config(format!("unknown tolerance {name:?}"))),
        }
    }
    Ok((rotation, charge))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Verify(a) => {
            let ctx = load(&a)?;
            gpeps::par::with_workers(ctx.cfg.workers, || commands::verify(&ctx))
        }
        Command::Converge(a) => commands::converge(&load(&a)?),
        Command::Build(a) => {
            let ctx = load(&a)?;
            gpeps::par::with_workers(ctx.cfg.workers, || commands::build(&ctx))
        }
        Command::Spectrum(a) => commands::spectrum(&load(&a)?),
        Command::RotateCheck(a) => {
            let (rotation, charge) = check_tolerances(&a.tol)?;
            commands::rotate_check(&a.state, rotation, charge, a.out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gpeps: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
