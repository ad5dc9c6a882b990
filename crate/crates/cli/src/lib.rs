//! Instance-file front end for `regmap-core`: load an instance, run its
//! tasks, and write one JSON report per task.

pub mod instance;
pub mod report;
pub mod run;

pub use instance::{load_instance, parse_instance, Instance, InstanceFile, TaskDecl, TaskKind, DEFAULT_CAP};
pub use report::{Report, TaskStatus};
pub use run::{run_task, run_tasks, RunOptions};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Errors that stop a run before any task executes.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error("task `{task}` enumerates {tuples} tuples, above the cap of {cap}")]
    Cap { task: String, tuples: u64, cap: u64 },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Cap { .. } => 3,
            _ => 2,
        }
    }
}
