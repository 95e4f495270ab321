//! `ltirelay` command-line front end.

mod args;
mod commands;

use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

/// How a command failed; decides the exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, config or parameter values. Exit code 2.
    Usage(String),
    /// The computation failed. Exit code 1, with a diagnostic JSON body.
    Solver {
        message: String,
        detail: serde_json::Value,
    },
}

impl Failure {
    pub fn solver(message: impl Into<String>, detail: impl Serialize) -> Self {
        Self::Solver {
            message: message.into(),
            detail: serde_json::to_value(detail).unwrap_or(serde_json::Value::Null),
        }
    }
}

impl From<ltirelay::Error> for Failure {
    fn from(e: ltirelay::Error) -> Self {
        let detail = match &e {
            ltirelay::Error::NotConverged {
                iterations,
                objective_change,
                last,
            } => serde_json::json!({
                "iterations": iterations,
                "objective_change": objective_change,
                "last_rate": last.rate,
            }),
            _ => serde_json::Value::Null,
        };
        Self::Solver {
            message: e.to_string(),
            detail,
        }
    }
}

/// Writes `body` to `out`, or to standard output.
pub fn emit(out: Option<&Path>, body: &str) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure::solver(format!("write failed: {e}"), serde_json::Value::Null);
    match out {
        Some(path) => std::fs::write(path, body).map_err(io),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(body.as_bytes()).map_err(io)?;
            stdout.flush().map_err(io)
        }
    }
}

pub fn to_json(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn main() -> ExitCode {
    let cli = match args::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Solver { message, detail }) => {
            eprintln!("error: {message}");
            println!(
                "{}",
                to_json(&serde_json::json!({
                    "schema_version": SCHEMA_VERSION,
                    "error": message,
                    "detail": detail,
                }))
                .trim_end()
            );
            ExitCode::from(1)
        }
    }
}
