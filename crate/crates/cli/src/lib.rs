//! Subcommands of the `innovbench` runner. Each takes a resolved
//! [`RunConfig`], writes its artifacts under `config.out`, and reports an
//! exit code.

pub mod config;
pub mod judge;
pub mod ngram;
pub mod report;
pub mod verify;

use std::fmt;
use std::path::{Path, PathBuf};

use innovbench_core::textlab::JudgeError;
use innovbench_core::Error;

pub use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NETWORK: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError { code: EXIT_CONFIG, message: msg.into() }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError {
            code: EXIT_IO,
            message: format!("{}: {e}", path.display()),
        }
    }

    pub fn network(msg: impl Into<String>) -> Self {
        CliError { code: EXIT_NETWORK, message: msg.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io { .. } => EXIT_IO,
            Error::Csv(c) if matches!(c.kind(), csv::ErrorKind::Io(_)) => EXIT_IO,
            Error::Judge(JudgeError::Transport(_) | JudgeError::Auth { .. } | JudgeError::Http { .. }) => EXIT_NETWORK,
            _ => EXIT_CONFIG,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Error::from(e).into()
    }
}

/// Result of a subcommand that ran to completion.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub code: i32,
    pub summary: String,
}

impl Outcome {
    pub fn ok(summary: impl Into<String>) -> Self {
        Outcome { code: EXIT_OK, summary: summary.into() }
    }
}

/// Runs `f` on a pool of `cfg.threads` workers, or the global pool.
pub fn with_threads<T: Send>(cfg: &RunConfig, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match cfg.threads {
        None => Ok(f()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

pub(crate) fn ensure_out(cfg: &RunConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))
}

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::config(e.to_string()))?;
    s.push('\n');
    write_file(path, s)
}

/// Writes `config.resolved.json` into the output directory.
pub fn record_config(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    ensure_out(cfg)?;
    let path = cfg.out_path("config.resolved.json");
    write_json(&path, cfg)?;
    Ok(path)
}
