//! The versioned report envelope and output files.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use stableforms::fields::{write_dump, FormField};

use crate::{Cli, Command, RunError};

pub const REPORT_SCHEMA: &str = "stableforms-report";
pub const REPORT_VERSION: u32 = 1;

/// What a command hands back to the writer.
#[derive(Debug)]
pub struct CommandOutput {
    pub result: Value,
    /// False when a reported check or convergence test failed.
    pub passed: bool,
    /// Table for plotting, written next to the JSON report.
    pub csv: Option<String>,
    /// Final field and its destination.
    pub dump: Option<(PathBuf, FormField<f64>)>,
}

impl CommandOutput {
    pub fn new(result: Value, passed: bool) -> Self {
        CommandOutput { result, passed, csv: None, dump: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Clone, Debug, Serialize)]
pub struct ErrorInfo {
    pub kind: String,
    pub message: String,
    pub diagnostic: Value,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub schema: &'static str,
    pub version: u32,
    pub command: &'static str,
    pub config: Command,
    /// SHA-256 of the canonical config JSON followed by the input file, if any.
    pub input_hash: String,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorInfo>,
}

#[derive(Debug)]
pub struct Outcome {
    pub report: Report,
    pub csv: Option<String>,
    pub dump: Option<(PathBuf, FormField<f64>)>,
}

/// Contents of the command's input file.
pub fn input_bytes(command: &Command) -> Result<Vec<u8>, RunError> {
    match command {
        Command::Analyze(a) => std::fs::read(&a.input)
            .map_err(|e| RunError::Invalid(format!("cannot read {}: {e}", a.input.display()))),
        _ => Ok(Vec::new()),
    }
}

pub fn input_hash(command: &Command, input: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(command).expect("configs serialize"));
    h.update([0u8]);
    h.update(input);
    hex::encode(h.finalize())
}

impl Outcome {
    /// Wraps a command result; numerical errors become a failed report,
    /// other errors are passed through.
    pub fn new(command: &Command, input: &[u8], result: Result<CommandOutput, RunError>) -> Result<Self, RunError> {
        let mut report = Report {
            schema: REPORT_SCHEMA,
            version: REPORT_VERSION,
            command: command.name(),
            config: command.clone(),
            input_hash: input_hash(command, input),
            status: Status::Ok,
            result: None,
            error: None,
        };
        match result {
            Ok(out) => {
                report.status = if out.passed { Status::Ok } else { Status::Failed };
                report.result = Some(out.result);
                Ok(Outcome { report, csv: out.csv, dump: out.dump })
            }
            Err(RunError::Numerical { kind, message, diagnostic }) => {
                report.status = Status::Failed;
                report.error = Some(ErrorInfo { kind: kind.into(), message, diagnostic });
                Ok(Outcome { report, csv: None, dump: None })
            }
            Err(e) => Err(e),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.report.status {
            Status::Ok => 0,
            Status::Failed => 2,
        }
    }

    pub fn json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.report).expect("reports serialize");
        s.push('\n');
        s
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), RunError> {
    let io = |source| RunError::Output { path: path.to_path_buf(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, contents).map_err(io)
}

/// Path of the CSV sidecar of a report.
pub fn csv_path(out: &Path) -> PathBuf {
    out.with_extension("csv")
}

/// Writes the report (to `--out` or standard output), the CSV sidecar and
/// any field dump.
pub fn emit(cli: &Cli, outcome: &Outcome) -> Result<(), RunError> {
    let json = outcome.json();
    match &cli.out {
        Some(path) => {
            write_file(path, json.as_bytes())?;
            if let Some(csv) = &outcome.csv {
                write_file(&csv_path(path), csv.as_bytes())?;
            }
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(json.as_bytes())
                .map_err(|source| RunError::Output { path: PathBuf::from("<stdout>"), source })?;
        }
    }
    if let Some((path, field)) = &outcome.dump {
        write_dump(field, path).map_err(|e| RunError::Output {
            path: path.clone(),
            source: std::io::Error::other(e.to_string()),
        })?;
    }
    Ok(())
}
