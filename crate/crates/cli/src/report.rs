//! Run reports: JSON verdicts, a CSV series and a separate timing file.
//!
//! The JSON and CSV bodies depend only on the configuration and seed. Wall
//! clock and thread count go to `<experiment>.meta.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::CliError;

/// One verdict row.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub stderr: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    /// Passes when `|value| <= tolerance`.
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            value,
            stderr: None,
            tolerance,
            pass: value.abs() <= tolerance,
        }
    }

    /// Passes when `value >= tolerance`.
    pub fn at_least(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            value,
            stderr: None,
            tolerance,
            pass: value >= tolerance,
        }
    }

    pub fn with_stderr(mut self, stderr: f64) -> Self {
        self.stderr = Some(stderr);
        self
    }
}

/// A table written as CSV.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Series {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Series {
    pub fn new(header: &[&str]) -> Self {
        Series {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Shortest round-trip representation.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub experiment: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    pub series: Series,
    pub wall_clock: f64,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn to_json(&self) -> Value {
        let checks: Vec<Value> = self
            .checks
            .iter()
            .map(|c| {
                json!({
                    "name": c.name,
                    "value": c.value,
                    "stderr": c.stderr,
                    "tolerance": c.tolerance,
                    "pass": c.pass,
                })
            })
            .collect();
        json!({
            "experiment": self.experiment,
            "seed": self.seed,
            "config": self.config,
            "checks": checks,
            "notes": self.notes,
            "pass": self.passed(),
        })
    }

    pub fn json_body(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_json()).expect("report serializes");
        s.push('\n');
        s
    }

    /// Writes `<out>/<experiment>.json`, the CSV series and
    /// `<out>/<experiment>.meta.json`. Returns the paths written.
    pub fn write(&self, out: &Path, csv_path: Option<&Path>, threads: usize) -> Result<Vec<PathBuf>, CliError> {
        fs::create_dir_all(out)?;
        let json_path = out.join(format!("{}.json", self.experiment));
        fs::write(&json_path, self.json_body())?;
        let csv_path = csv_path
            .map(Path::to_path_buf)
            .unwrap_or_else(|| out.join(format!("{}.csv", self.experiment)));
        if let Some(parent) = csv_path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        fs::write(&csv_path, self.series.to_csv()?)?;
        let meta_path = out.join(format!("{}.meta.json", self.experiment));
        let meta = json!({
            "wall_clock_seconds": self.wall_clock,
            "threads": threads,
            "version": env!("CARGO_PKG_VERSION"),
        });
        fs::write(&meta_path, serde_json::to_string_pretty(&meta).expect("meta serializes") + "\n")?;
        Ok(vec![json_path, csv_path, meta_path])
    }
}
