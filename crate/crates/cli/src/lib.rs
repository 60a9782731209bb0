//! Library side of the `masim` binary: scenario files, runs and replays.

use std::path::PathBuf;

use masim_cases::Issue;
use masim_core::agent::{CoordinatorError, TraceError};
use thiserror::Error;

pub mod replay;
pub mod run;
pub mod scenario;

pub use replay::{replay, Metric};
pub use run::{run_scenario, RunOptions, RunOutcome};
pub use scenario::{Case, Mode, ScenarioFile};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}", render(.0))]
    Config(Vec<Issue>),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("run failed at step {step}: {message}")]
    StepFailed { step: u64, message: String },
    #[error("run failed: {0}")]
    Runtime(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("writing output: {0}")]
    Output(std::io::Error),
    #[error("trace was produced with config {trace}, but the given config hashes to {config} (use --force to override)")]
    HashMismatch { trace: String, config: String },
    #[error("metric '{metric}' is not defined for the {case} case")]
    UnsupportedMetric { metric: String, case: String },
}

fn render(issues: &[Issue]) -> String {
    issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n")
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::HashMismatch { .. } | CliError::UnsupportedMetric { .. } => EXIT_CONFIG,
            _ => EXIT_RUNTIME,
        }
    }

    pub(crate) fn from_coordinator(e: CoordinatorError) -> Self {
        match e {
            CoordinatorError::Hook { step, message } => CliError::StepFailed { step, message },
            CoordinatorError::Env { step, source } => CliError::StepFailed { step, message: source.to_string() },
            CoordinatorError::Config(m) => CliError::Config(vec![Issue::new("$", m)]),
            other => CliError::Runtime(other.to_string()),
        }
    }
}
