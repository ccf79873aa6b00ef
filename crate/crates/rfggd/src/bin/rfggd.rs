use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rfggd::commands::{run, Command, Overrides};

#[derive(Parser)]
#[command(name = "rfggd", version, about = "Feasibility-guided tuning of CBF-CLF QP controllers")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Random seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print nothing on success.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Feasible horizon of the car over a grid of barrier rates.
    CarGrid,
    /// Parameter iterates of the car from infeasible starting rates.
    CarRfggd,
    /// Adaptive versus fixed-parameter leader following.
    Follow,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(config) = cli.config else {
        eprintln!("error: --config <PATH> is required");
        return ExitCode::from(2);
    };
    let cmd = match cli.command {
        Cmd::CarGrid => Command::CarGrid,
        Cmd::CarRfggd => Command::CarRfggd,
        Cmd::Follow => Command::Follow,
    };
    let overrides = Overrides {
        out: cli.out,
        seed: cli.seed,
    };
    match run(cmd, &config, &overrides) {
        Ok(outcome) => {
            if !cli.quiet {
                for line in &outcome.summary {
                    println!("{line}");
                }
                for f in &outcome.files {
                    println!("wrote {}", f.display());
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
