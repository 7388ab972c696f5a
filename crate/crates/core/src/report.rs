//! JSON and CSV report output.
//!
//! Every command writes the same CSV columns, [`CSV_COLUMNS`]. The JSON report
//! wraps the rows with the command name, the configuration, the seed and a
//! `details` object holding the full typed results.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{AttackReport, DistanceReport, MulticopyReport};
use crate::error::{Error, Result};

pub const CSV_COLUMNS: [&str; 7] = ["n", "scheme", "pair", "computed", "expected", "error", "runtime_ms"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub n: usize,
    pub scheme: String,
    pub pair: String,
    pub computed: f64,
    /// A number, `<=x`, `<x`, `~x`, `conjecture` or `report`.
    pub expected: String,
    pub error: Option<f64>,
    pub runtime_ms: f64,
    pub passed: bool,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    n: usize,
    scheme: &'a str,
    pair: &'a str,
    computed: f64,
    expected: &'a str,
    error: Option<f64>,
    runtime_ms: f64,
}

impl ReportRow {
    pub fn from_distance(r: &DistanceReport) -> Self {
        Self {
            n: r.n,
            scheme: r.scheme.to_string(),
            pair: r.pair_label(),
            computed: r.computed,
            expected: r.expected.describe(),
            error: r.error,
            runtime_ms: r.runtime_ms,
            passed: r.passed(),
        }
    }

    /// Two rows: the asserted centred norm and the reported full norm.
    pub fn from_multicopy(r: &MulticopyReport) -> Vec<Self> {
        vec![
            Self {
                n: r.n,
                scheme: "1bit".into(),
                pair: format!("centered|t={}", r.t),
                computed: r.norm_centered,
                expected: format!("<{}", r.bound),
                error: None,
                runtime_ms: r.runtime_ms,
                passed: r.passed(),
            },
            Self {
                n: r.n,
                scheme: "1bit".into(),
                pair: format!("full|t={}", r.t),
                computed: r.norm_full,
                expected: "report".into(),
                error: None,
                runtime_ms: r.runtime_ms,
                passed: true,
            },
        ]
    }

    /// Success rate against its analytic target and the Helstrom bound.
    pub fn from_attack(name: &str, r: &AttackReport, runtime_ms: f64) -> Self {
        Self {
            n: r.n,
            scheme: "1bit".into(),
            pair: name.into(),
            computed: r.empirical_success,
            expected: format!("~{}", r.expected_success),
            error: Some((r.empirical_success - r.expected_success).abs()),
            runtime_ms,
            passed: r.passed(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub passed: bool,
    pub rows: Vec<ReportRow>,
    pub details: serde_json::Value,
}

impl Report {
    pub fn new(command: &str, config: serde_json::Value, seed: Option<u64>) -> Self {
        Self {
            command: command.into(),
            config,
            seed,
            passed: true,
            rows: Vec::new(),
            details: serde_json::Value::Array(Vec::new()),
        }
    }

    pub fn push(&mut self, row: ReportRow) {
        self.passed &= row.passed;
        self.rows.push(row);
    }

    pub fn extend(&mut self, rows: impl IntoIterator<Item = ReportRow>) {
        for row in rows {
            self.push(row);
        }
    }

    /// Appends a typed result to `details`.
    pub fn detail<T: Serialize>(&mut self, value: &T) -> Result<()> {
        let v = serde_json::to_value(value).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        if let serde_json::Value::Array(items) = &mut self.details {
            items.push(v);
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn to_csv(&self) -> String {
        rows_to_csv(&self.rows)
    }

    /// Writes `report.json` and `report.csv` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), self.to_json())?;
        fs::write(dir.join("report.csv"), self.to_csv())
    }
}

pub fn rows_to_csv(rows: &[ReportRow]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(CSV_COLUMNS).expect("in-memory write");
    for r in rows {
        w.serialize(CsvRow {
            n: r.n,
            scheme: &r.scheme,
            pair: &r.pair,
            computed: r.computed,
            expected: &r.expected,
            error: r.error,
            runtime_ms: r.runtime_ms,
        })
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}
