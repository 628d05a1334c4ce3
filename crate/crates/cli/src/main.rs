use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use qs_trotter_cli::{execute, load, Format, Overrides};

const EXIT_CODES: &str = "\
Commands (the \"command\" field of the config):
  check, compose, trotter-sweep, fock-compare, lie-check, weyl-check, brownian

Exit codes:
  0  all checks passed
  1  a check failed (the report is still written)
  2  usage error: bad flags, malformed or invalid config, budget exceeded
  3  I/O error reading the config or writing the report";

/// Quantum stochastic Trotter products: structure checks, convergence sweeps
/// and toy-Fock cross-checks driven by a JSON config.
#[derive(Parser, Debug)]
#[command(name = "qstrotter", version, after_help = EXIT_CODES)]
struct Args {
    /// Experiment config (JSON).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Report format.
    #[arg(long, value_name = "csv|json")]
    format: Option<Format>,
    /// Pass/fail tolerance; overrides the config.
    #[arg(long, value_name = "FLOAT")]
    tol: Option<f64>,
    /// Random seed; overrides the config.
    #[arg(long, value_name = "INT")]
    seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long, value_name = "INT")]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let overrides = Overrides { out: args.out, format: args.format, tol: args.tol, seed: args.seed, threads: args.threads };
    let result = load(&args.config, &overrides).and_then(|cfg| execute(&cfg, &mut std::io::stdout().lock()));
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("qstrotter: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
