//! `rpl`: simulate, calibrate, trajectory-sample, sweep and optimize
//! single-pulse Rydberg-blockade controlled-PHASE gates from a JSON config.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "rpl", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate the three gate manifolds and report fidelity and phases.
    Simulate(Common),
    /// Decide whether waveform coefficients are linear or angular frequencies.
    CalibrateConvention(Common),
    /// Quantum-jump estimate of the decay-limited gate error.
    Mcwf(Common),
    /// Gate error along one parameter axis.
    Sweep(Common),
    /// Search a waveform family for a low-error pulse.
    Optimize(Common),
}

#[derive(Args, Clone)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; results do not depend on it.
    #[arg(long, env = "RPL_WORKERS")]
    workers: Option<usize>,
    /// Overrides every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Recompute even when a convention lock exists.
    #[arg(long)]
    force: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args, run): (&str, &Common, commands::Runner) = match &cli.command {
        Command::Simulate(a) => ("simulate", a, commands::simulate),
        Command::CalibrateConvention(a) => ("calibrate-convention", a, commands::calibrate),
        Command::Mcwf(a) => ("mcwf", a, commands::mcwf),
        Command::Sweep(a) => ("sweep", a, commands::sweep),
        Command::Optimize(a) => ("optimize", a, commands::optimize),
    };
    match commands::execute(name, args, run) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("rpl {name}: {e}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
