use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pat_lab::{run, Command, RunOptions};

#[derive(Parser)]
#[command(name = "pat-lab", version, about = "Photoacoustic numerics laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Run directory; must not exist or be empty.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "PAT_LAB_WORKERS")]
    workers: Option<usize>,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Forward simulation: trace, fields, energy.
    Simulate(Common),
    /// Stability ensemble; exit 1 on any uniqueness violation.
    Verify(Common),
    /// Fixed-speed or joint reconstruction from synthetic data.
    Reconstruct(Common),
    /// Cartesian sweep of verify runs.
    Sweep(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, args) = match cli.command {
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Verify(a) => (Command::Verify, a),
        Cmd::Reconstruct(a) => (Command::Reconstruct, a),
        Cmd::Sweep(a) => (Command::Sweep, a),
    };
    let text = match fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    let opts = RunOptions {
        out: args.out,
        workers: args.workers,
        seed: args.seed,
    };
    match run(cmd, &text, &opts) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            println!("run directory: {}", outcome.run_dir.display());
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {}: {e}", args.config.display());
            ExitCode::from(2)
        }
    }
}
