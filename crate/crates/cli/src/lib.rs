//! Command-line front end for the qs-trotter library.

pub mod commands;
pub mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub use commands::{run, Report};
pub use config::{parse_config, ConfigError, ExperimentConfig, Format};

pub const EXIT_PASS: u8 = 0;
pub const EXIT_CHECK_FAILED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;

#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

pub fn load(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = parse_config(&text)?;
    if let Some(out) = &overrides.out {
        cfg.out = Some(out.clone());
    }
    if let Some(f) = overrides.format {
        cfg.format = f;
    }
    if let Some(t) = overrides.tol {
        if !(t > 0.0) || !t.is_finite() {
            return Err(CliError::Usage(format!("--tol must be positive and finite, got {t}")));
        }
        cfg.tol = Some(t);
    }
    if let Some(s) = overrides.seed {
        cfg.seed = s;
    }
    if let Some(n) = overrides.threads {
        cfg.threads = Some(n);
    }
    if cfg.threads == Some(0) {
        return Err(CliError::Usage("thread count must be at least 1".into()));
    }
    Ok(cfg)
}

/// Runs a loaded config: prints the summary, writes the report, returns the exit code.
pub fn execute(cfg: &ExperimentConfig, stdout: &mut impl Write) -> Result<u8, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    let report = pool.install(|| run(cfg)).map_err(|e| CliError::Usage(e.to_string()))?;
    let body = match cfg.format {
        Format::Csv => report.csv.clone(),
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&report.json).expect("report values serialize");
            s.push('\n');
            s
        }
    };
    let io = |e: std::io::Error| CliError::Io(format!("cannot write output: {e}"));
    for line in &report.summary {
        writeln!(stdout, "{line}").map_err(io)?;
    }
    match &cfg.out {
        Some(path) => {
            fs::write(path, body.as_bytes()).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
            writeln!(stdout, "wrote {}", path.display()).map_err(io)?;
        }
        None => stdout.write_all(body.as_bytes()).map_err(io)?,
    }
    Ok(if report.passed { EXIT_PASS } else { EXIT_CHECK_FAILED })
}
