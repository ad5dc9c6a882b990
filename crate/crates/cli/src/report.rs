use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::instance::{TaskDecl, TaskKind};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TaskStatus {
    Pass,
    Fail,
    Success,
    DiscretizationGap,
    Error,
}

impl TaskStatus {
    pub fn is_ok(self) -> bool {
        matches!(self, TaskStatus::Pass | TaskStatus::Success)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskStatus::Pass => "PASS",
            TaskStatus::Fail => "FAIL",
            TaskStatus::Success => "SUCCESS",
            TaskStatus::DiscretizationGap => "DISCRETIZATION_GAP",
            TaskStatus::Error => "ERROR",
        }
    }
}

/// One task's result. Everything except `wall_time_ms` is a function of the
/// instance bytes and the command-line overrides.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub tool_version: String,
    pub instance_digest: String,
    pub task: TaskDecl,
    pub status: TaskStatus,
    pub wall_time_ms: f64,
    pub payload: Value,
}

impl Report {
    pub fn payload_string(&self) -> String {
        serde_json::to_string(&self.payload).expect("JSON values always serialize")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }

    pub fn summary_line(&self) -> String {
        format!("{:<24} {:<16} {:<18} {:>10.1} ms", self.task.name, self.task.kind.command(), self.status.as_str(), self.wall_time_ms)
    }

    /// Writes `<task>.json`, plus `<task>.csv` for fixed-point tasks.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        let json = dir.join(format!("{}.json", self.task.name));
        std::fs::write(&json, self.to_json()).map_err(io)?;
        let mut out = vec![json];
        if matches!(self.task.kind, TaskKind::VerifyFixpoint(_)) {
            let csv = dir.join(format!("{}.csv", self.task.name));
            write_fixpoint_csv(&self.payload, &csv)?;
            out.push(csv);
        }
        Ok(out)
    }

    /// Human-readable rendering of a stored report.
    pub fn pretty(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "task      {} ({})", self.task.name, self.task.kind.command());
        let _ = writeln!(s, "status    {}", self.status.as_str());
        let _ = writeln!(s, "version   {}", self.tool_version);
        let _ = writeln!(s, "instance  {}", self.instance_digest);
        let _ = writeln!(s, "time      {:.1} ms", self.wall_time_ms);
        if let Some(e) = self.payload.get("error") {
            let _ = writeln!(s, "error     {}", e.as_str().unwrap_or_default());
        }
        let _ = writeln!(s, "payload");
        let _ = write!(s, "{}", serde_json::to_string_pretty(&self.payload).unwrap_or_default());
        s
    }
}

pub fn read_report(path: &Path) -> Result<Report, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Parse { line: e.line(), column: e.column(), message: e.to_string() })
}

fn cell(v: &Value) -> String {
    match v {
        Value::Array(a) => a.iter().map(cell).collect::<Vec<_>>().join(" "),
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

/// Rows (x, lhs, rhs, ratio, status) from the set-distance form, then any
/// explicitly requested points.
fn write_fixpoint_csv(payload: &Value, path: &Path) -> Result<(), CliError> {
    let err = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["x", "lhs", "rhs", "ratio", "status"]).map_err(err)?;
    let rows = ["rows", "point_rows"]
        .iter()
        .filter_map(|k| payload.get(k).and_then(Value::as_array))
        .flatten();
    for r in rows {
        let status = if r.get("holds").and_then(Value::as_bool) == Some(true) { "PASS" } else { "FAIL" };
        let f = |k: &str| r.get(k).map(cell).unwrap_or_default();
        w.write_record([f("x"), f("lhs"), f("rhs"), f("ratio"), status.to_string()]).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
