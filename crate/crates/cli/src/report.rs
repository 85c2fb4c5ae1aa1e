//! Run reports (JSON) and residual streams (CSV).

use std::io::Write;

use pnf_core::report::CheckReport;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

/// One pass/fail line: the worst residual of a check against its tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub suite: String,
    pub name: String,
    /// Worst value over the samples; `null` when non-finite or never measured.
    pub residual: Option<f64>,
    pub tolerance: f64,
    pub comparison: Comparison,
    pub passed: bool,
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probed_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

impl Record {
    pub fn new(suite: &str, name: &str, residual: f64, tolerance: f64, comparison: Comparison, samples: usize) -> Self {
        let residual = residual.is_finite().then_some(residual);
        let passed = match (residual, comparison) {
            (Some(r), Comparison::AtMost) => r <= tolerance,
            (Some(r), Comparison::AtLeast) => r >= tolerance,
            (None, _) => false,
        };
        Record {
            suite: suite.into(),
            name: name.into(),
            residual,
            tolerance,
            comparison,
            passed,
            samples,
            probed_radius: None,
            errors: Vec::new(),
        }
    }

    /// A record that failed before producing a residual.
    pub fn error(suite: &str, name: &str, message: String) -> Self {
        let mut r = Record::new(suite, name, f64::NAN, 0.0, Comparison::AtMost, 0);
        r.errors.push(message);
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_name: Option<String>,
    /// SHA-256 of the compact config JSON with the output section removed.
    pub config_digest: String,
    pub tool_version: String,
    pub passed: bool,
    pub records: Vec<Record>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    /// Excluded from pass/fail and from the digest.
    pub timing: Timing,
    #[serde(skip)]
    pub rows: Vec<ResidualRow>,
}

/// One CSV line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualRow {
    pub suite: String,
    pub check: String,
    pub sample: usize,
    pub value: f64,
    /// Sample coordinates separated by spaces.
    pub point: String,
}

pub fn config_digest(cfg: &RunConfig) -> String {
    let mut c = cfg.clone();
    c.output = Default::default();
    let bytes = serde_json::to_vec(&c).expect("config serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Report {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        Report {
            command: command.into(),
            config_name: cfg.name.clone(),
            config_digest: config_digest(cfg),
            tool_version: format!("pnf {}", env!("CARGO_PKG_VERSION")),
            passed: true,
            records: Vec::new(),
            notes: Vec::new(),
            timing: Timing { wall_clock_s: 0.0 },
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, r: Record) {
        self.passed &= r.passed;
        self.records.push(r);
    }

    /// Adds one record per residual kind of `cr`, renamed by `rename`, plus a
    /// `sample-errors` record counting samples that raised an error.
    pub fn absorb<F>(&mut self, suite: &str, cr: &CheckReport, cfg: &RunConfig, rename: F, primary: &str)
    where
        F: Fn(&str) -> String,
    {
        for (kind, _) in &cr.limits {
            let name = rename(kind);
            let count = cr.residuals.iter().filter(|r| &r.kind == kind).count();
            let worst = if count == 0 && !cr.failures.is_empty() { f64::NAN } else { cr.max(kind) };
            let mut rec = Record::new(suite, &name, worst, cfg.tolerance(&name), Comparison::AtMost, count);
            if kind == primary {
                rec.probed_radius = cr.probed_radius;
            }
            self.push(rec);
        }
        let mut errs = Record::new(suite, "sample-errors", cr.failures.len() as f64, 0.0, Comparison::AtMost, cr.failures.len());
        errs.errors = cr
            .failures
            .iter()
            .map(|f| format!("sample {} at {:?}: {}", f.sample, f.point, f.error))
            .collect();
        self.push(errs);
        for r in &cr.residuals {
            self.rows.push(ResidualRow {
                suite: suite.into(),
                check: rename(&r.kind),
                sample: r.sample,
                value: r.value,
                point: r.point.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" "),
            });
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for row in &self.rows {
            out.serialize(row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// One `PASS`/`FAIL` line per record.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            let cmp = match r.comparison {
                Comparison::AtMost => "<=",
                Comparison::AtLeast => ">=",
            };
            let value = r.residual.map_or("n/a".to_string(), |v| format!("{v:.3e}"));
            s.push_str(&format!(
                "{} {}/{}: {value} {cmp} {:.1e}",
                if r.passed { "PASS" } else { "FAIL" },
                r.suite,
                r.name,
                r.tolerance
            ));
            if let Some(p) = r.probed_radius {
                s.push_str(&format!(" (probed radius {p:.3})"));
            }
            if let Some(e) = r.errors.first() {
                s.push_str(&format!(" [{e}]"));
            }
            s.push('\n');
        }
        s
    }
}
