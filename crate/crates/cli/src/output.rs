//! Result tables, provenance headers and atomic output.

use crate::params::Format;
use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::Path;

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Self::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Self::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Self::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Self::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Self::Text(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Self::Text(v.to_string())
    }
}

/// Seventeen significant digits, so every double round-trips.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.16e}")
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl Cell {
    fn to_csv(&self) -> String {
        match self {
            Self::Float(v) => format_float(*v),
            Self::Int(v) => v.to_string(),
            Self::Text(s) => csv_field(s),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Self::Float(v) if v.is_finite() => json!(v),
            Self::Float(v) => json!(format_float(*v)),
            Self::Int(v) => json!(v),
            Self::Text(s) => json!(s),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.iter().map(|c| csv_field(c)).collect::<Vec<_>>().join(",");
        out.push_str("\r\n");
        for row in &self.rows {
            out.push_str(&row.iter().map(Cell::to_csv).collect::<Vec<_>>().join(","));
            out.push_str("\r\n");
        }
        out
    }
}

/// A named pass/fail check whose failure makes the process exit non-zero.
#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

/// What a command produces.
#[derive(Debug, Default)]
pub struct Report {
    pub table: Table,
    /// Extra scalar results, emitted as JSON.
    pub summary: Value,
    pub verdicts: Vec<Verdict>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn failure_json(&self, command: &str) -> Value {
        json!({
            "status": "fail",
            "command": command,
            "failed": self.verdicts.iter().filter(|v| !v.passed).collect::<Vec<_>>(),
        })
    }
}

pub struct Provenance {
    pub command: String,
    pub config: Value,
    pub seed: u64,
}

impl Provenance {
    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_string(&self.config).expect("JSON values serialize");
        Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn render(report: &Report, prov: &Provenance, format: Format) -> String {
    let version = env!("CARGO_PKG_VERSION");
    match format {
        Format::Csv => {
            let mut out = String::new();
            out.push_str(&format!("# depthcond {version}\r\n"));
            out.push_str(&format!("# command: {}\r\n", prov.command));
            out.push_str(&format!("# seed: {}\r\n", prov.seed));
            out.push_str(&format!("# config-sha256: {}\r\n", prov.config_hash()));
            out.push_str(&format!("# config: {}\r\n", prov.config));
            if !report.summary.is_null() {
                out.push_str(&format!("# summary: {}\r\n", report.summary));
            }
            for v in &report.verdicts {
                out.push_str(&format!("# verdict {}: {} ({})\r\n", v.name, v.passed, v.detail));
            }
            out.push_str(&report.table.to_csv());
            out
        }
        Format::Json => {
            let rows: Vec<Value> =
                report.table.rows.iter().map(|r| Value::Array(r.iter().map(Cell::to_json).collect())).collect();
            let doc = json!({
                "provenance": {
                    "version": version,
                    "command": prov.command,
                    "seed": prov.seed,
                    "config-sha256": prov.config_hash(),
                },
                "config": prov.config,
                "columns": report.table.columns,
                "rows": rows,
                "summary": report.summary,
                "verdicts": report.verdicts,
                "passed": report.passed(),
            });
            let mut s = serde_json::to_string_pretty(&doc).expect("JSON values serialize");
            s.push('\n');
            s
        }
    }
}

/// Writes to a temporary file beside `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("cannot create a temporary file in {}", dir.display()))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(format_float(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(format_float(f64::INFINITY), "inf");
    }

    #[test]
    fn csv_quoting() {
        let mut t = Table::new(&["name", "x"]);
        t.push(vec!["a,b".into(), Cell::Int(3)]);
        t.push(vec!["say \"hi\"".into(), 0.5.into()]);
        assert_eq!(t.to_csv(), "name,x\r\n\"a,b\",3\r\n\"say \"\"hi\"\"\",5.0000000000000000e-1\r\n");
    }
}
