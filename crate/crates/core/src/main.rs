use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use chronosync::cli::{self, CliError, Outcome};

#[derive(Parser)]
#[command(name = "chronosync", version, about = "Clock synchronization simulator and certificate engine")]
struct Args {
    #[command(subcommand)]
    command: Command,
    /// Scenario file (TOML); defaults to the built-in reference scenario.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Master seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of runs for `batch`.
    #[arg(long, global = true, default_value_t = 20)]
    runs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Search for a Lyapunov certificate and report its constants.
    Certify,
    /// Simulate one run and write trajectory, metrics and event CSVs.
    Simulate,
    /// Certify, simulate and check the trajectory against the certificate.
    Verify,
    /// Full reference pipeline including figure data.
    Reproduce,
    /// Monte Carlo runs with per-run summaries.
    Batch,
}

fn run(args: &Args) -> Result<Outcome, CliError> {
    let cfg = cli::load_config(args.config.as_deref())?;
    let seed = args.seed.unwrap_or(cfg.seed);
    match args.command {
        Command::Certify => {
            let mut cfg = cfg;
            cfg.seed = seed;
            cli::cmd_certify(&cfg, &args.out)
        }
        Command::Simulate => cli::cmd_simulate(&cfg, &args.out, seed),
        Command::Verify => cli::cmd_verify(&cfg, &args.out, seed),
        Command::Reproduce => cli::cmd_reproduce(&cfg, &args.out, seed),
        Command::Batch => cli::cmd_batch(&cfg, &args.out, seed, args.runs),
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            ExitCode::from(outcome.code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
