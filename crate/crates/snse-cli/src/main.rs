//! `snse` batch front end: one subcommand per experiment.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use snse::config::Command;
use snse::orchestrator::{default_config_json, exit, run_from_str, RunOptions};

#[derive(Parser)]
#[command(name = "snse", version, about = "Stochastic Navier-Stokes on the rotating sphere with stable Levy noise")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Forward run with the energy ledger
    Simulate(Common),
    /// Pullback ensemble and Hausdorff trace
    Pullback(Common),
    /// Pullback ensemble plus absorbing radii and absorption checks
    Attractor(Common),
    /// Ornstein-Uhlenbeck statistics and the alpha certificate
    OuStats(Common),
    /// Gronwall and absorption checks over an ensemble
    Verify(Common),
    /// Invariant measure, Chapman-Kolmogorov, invariance and Feller probes
    Measure(Common),
    /// Cocycle residuals
    Cocycle(Common),
    /// Print the default configuration
    PrintConfig,
}

#[derive(Args)]
struct Common {
    /// JSON configuration; defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory [default: out/<command>]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed, overriding model.seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (command, common) = match cli.command {
        Cmd::Simulate(c) => (Command::Simulate, c),
        Cmd::Pullback(c) => (Command::Pullback, c),
        Cmd::Attractor(c) => (Command::Attractor, c),
        Cmd::OuStats(c) => (Command::OuStats, c),
        Cmd::Verify(c) => (Command::Verify, c),
        Cmd::Measure(c) => (Command::Measure, c),
        Cmd::Cocycle(c) => (Command::Cocycle, c),
        Cmd::PrintConfig => {
            // A closed pipe (`snse print-config | head`) is not an error.
            let _ = writeln!(std::io::stdout(), "{}", default_config_json());
            return ExitCode::SUCCESS;
        }
    };
    let raw = match &common.config {
        Some(p) => match std::fs::read_to_string(p) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("snse {}: cannot read {}: {e}", command.name(), p.display());
                return ExitCode::from(exit::CONFIG as u8);
            }
        },
        None => "{}".to_string(),
    };
    if common.threads == Some(0) {
        eprintln!("snse {}: --threads must be >= 1", command.name());
        return ExitCode::from(exit::CONFIG as u8);
    }
    let opts = RunOptions {
        command,
        out: common.out.unwrap_or_else(|| PathBuf::from("out").join(command.name())),
        seed: common.seed,
        threads: common.threads,
    };
    let outcome = run_from_str(&raw, &opts);
    if outcome.exit_code == exit::OK {
        let _ = writeln!(std::io::stdout(), "snse {}: {}", command.name(), outcome.summary);
    } else {
        eprintln!("snse {}: exit {}: {}", command.name(), outcome.exit_code, outcome.summary);
    }
    ExitCode::from(outcome.exit_code as u8)
}
