//! Run reports and their two renderings.
//!
//! The machine format is pretty-printed JSON that parses back to the same
//! [`Report`]. Results keep the scenario's task order, object keys inside
//! outputs are sorted, and wall times are left out unless asked for, so two runs
//! of one scenario produce identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Machine,
    Human,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskError {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskResult {
    pub kind: String,
    pub status: Status,
    pub inputs: Value,
    pub outputs: Option<Value>,
    /// Named inequality checks and whether they held.
    pub bounds: BTreeMap<String, bool>,
    pub error: Option<TaskError>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub tasks: usize,
    pub succeeded: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    pub summary: Summary,
    pub results: IndexMap<String, TaskResult>,
}

impl Report {
    pub fn new(version: impl Into<String>, scenario: Option<String>, results: IndexMap<String, TaskResult>) -> Self {
        let failed = results.values().filter(|r| r.status == Status::Error).count();
        Report {
            version: version.into(),
            scenario,
            summary: Summary {
                tasks: results.len(),
                succeeded: results.len() - failed,
                failed,
            },
            results,
        }
    }

    pub fn all_succeeded(&self) -> bool {
        self.summary.failed == 0
    }
}

pub fn emit(report: &Report, format: Format) -> String {
    match format {
        Format::Machine => emit_machine(report),
        Format::Human => emit_human(report),
    }
}

pub fn emit_machine(report: &Report) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("reports contain only JSON-representable values");
    s.push('\n');
    s
}

pub fn parse_machine(text: &str) -> serde_json::Result<Report> {
    serde_json::from_str(text)
}

fn flatten(prefix: &str, value: &Value, out: &mut Vec<(String, String)>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        Value::Array(items) if !items.is_empty() && items.iter().all(|v| !v.is_array() && !v.is_object()) => {
            let parts: Vec<String> = items
                .iter()
                .map(|v| match v {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect();
            out.push((prefix.to_string(), format!("[{}]", parts.join(", "))));
        }
        Value::Array(items) if !items.is_empty() => {
            for (i, v) in items.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), v, out);
            }
        }
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

fn table(rows: &[(String, String)], out: &mut String) {
    let width = rows.iter().map(|(k, _)| k.chars().count()).max().unwrap_or(0);
    for (k, v) in rows {
        let _ = writeln!(out, "    {k:<width$}  {v}");
    }
}

pub fn emit_human(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} report{}", report.version, report.scenario.as_deref().map(|n| format!(": {n}")).unwrap_or_default());
    let _ = writeln!(
        out,
        "tasks {}  succeeded {}  failed {}",
        report.summary.tasks, report.summary.succeeded, report.summary.failed
    );
    for (id, r) in &report.results {
        let status = match r.status {
            Status::Ok => "ok",
            Status::Error => "ERROR",
        };
        let time = r.wall_time_ms.map(|t| format!("  {t:.3} ms")).unwrap_or_default();
        let _ = writeln!(out, "\n[{status}] {id} ({}){time}", r.kind);
        if let Some(e) = &r.error {
            let _ = writeln!(out, "  error {}: {}", e.code, e.message);
        }
        if !r.bounds.is_empty() {
            let _ = writeln!(out, "  bounds");
            let rows: Vec<_> = r
                .bounds
                .iter()
                .map(|(k, v)| (k.clone(), if *v { "holds".to_string() } else { "VIOLATED".to_string() }))
                .collect();
            table(&rows, &mut out);
        }
        if let Some(o) = &r.outputs {
            let mut rows = Vec::new();
            flatten("", o, &mut rows);
            let _ = writeln!(out, "  outputs");
            table(&rows, &mut out);
        }
    }
    out
}
