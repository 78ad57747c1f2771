//! Reproducible experiments on stable 3-forms: argument handling, the
//! versioned report envelope and one module per subcommand.

pub mod commands;
pub mod config;
pub mod report;
pub mod suites;

use std::path::PathBuf;

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

pub use config::{Cli, Command};
pub use report::{CommandOutput, Outcome, Report, Status, REPORT_SCHEMA, REPORT_VERSION};

/// Environment variable capping the number of worker threads.
pub const WORKERS_ENV: &str = "HITCHIN_WORKERS";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    /// A computation failed; `diagnostic` is written into the report.
    #[error("{kind}: {message}")]
    Numerical { kind: &'static str, message: String, diagnostic: Value },
    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
}

impl RunError {
    pub fn numerical(kind: &'static str, message: impl ToString, diagnostic: Value) -> Self {
        RunError::Numerical { kind, message: message.to_string(), diagnostic }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Invalid(_) | RunError::Output { .. } => 1,
            RunError::Numerical { .. } => 2,
        }
    }
}

/// One verified property with its measured value and acceptance rule.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub expect: String,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: &str, measured: f64, bound: f64) -> Self {
        Check { name: name.into(), measured, expect: format!("<= {bound:e}"), passed: measured <= bound }
    }

    pub fn at_least(name: &str, measured: f64, bound: f64) -> Self {
        Check { name: name.into(), measured, expect: format!(">= {bound:e}"), passed: measured >= bound }
    }

    pub fn near(name: &str, measured: f64, target: f64, tol: f64) -> Self {
        Check {
            name: name.into(),
            measured,
            expect: format!("{target} ± {tol:e}"),
            passed: (measured - target).abs() <= tol,
        }
    }

    pub fn holds(name: &str, ok: bool) -> Self {
        Check { name: name.into(), measured: if ok { 1.0 } else { 0.0 }, expect: "true".into(), passed: ok }
    }

    pub fn equals(name: &str, measured: f64, target: f64) -> Self {
        Check { name: name.into(), measured, expect: format!("== {target}"), passed: measured == target }
    }
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed)
}

/// Worker count from [`WORKERS_ENV`], if set.
pub fn worker_count() -> Result<Option<usize>, RunError> {
    match std::env::var(WORKERS_ENV) {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(RunError::Invalid(format!("{WORKERS_ENV} must be a positive integer, got {s:?}"))),
        },
    }
}

/// Validates, runs the command on its own worker pool and writes the
/// report. Returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match execute(&cli) {
        Ok(outcome) => match report::emit(&cli, &outcome) {
            Ok(()) => outcome.exit_code(),
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs the command and builds the report without writing anything.
pub fn execute(cli: &Cli) -> Result<Outcome, RunError> {
    cli.command.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = worker_count()? {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| RunError::Invalid(format!("cannot start worker pool: {e}")))?;
    let input = report::input_bytes(&cli.command)?;
    let result = pool.install(|| commands::dispatch(&cli.command));
    Outcome::new(&cli.command, &input, result)
}
