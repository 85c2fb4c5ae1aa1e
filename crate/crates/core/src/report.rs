//! Per-sample residual bookkeeping shared by every verification routine.

use crate::error::Error;

/// One measured residual at one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub sample: usize,
    pub point: Vec<f64>,
    pub kind: String,
    pub value: f64,
}

/// A sample whose evaluation raised an error.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleFailure {
    pub sample: usize,
    pub point: Vec<f64>,
    pub error: Error,
}

/// Residuals with the tolerance each kind is judged against.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CheckReport {
    pub residuals: Vec<Residual>,
    pub failures: Vec<SampleFailure>,
    /// `(kind, tolerance)` in insertion order.
    pub limits: Vec<(String, f64)>,
    /// Largest fiber radius up to which every sample succeeded.
    pub probed_radius: Option<f64>,
}

impl CheckReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn limit(&mut self, kind: &str, tol: f64) {
        match self.limits.iter_mut().find(|(k, _)| k == kind) {
            Some(slot) => slot.1 = tol,
            None => self.limits.push((kind.to_string(), tol)),
        }
    }

    pub fn push(&mut self, sample: usize, point: &[f64], kind: &str, value: f64) {
        self.residuals.push(Residual { sample, point: point.to_vec(), kind: kind.to_string(), value });
    }

    pub fn fail(&mut self, sample: usize, point: &[f64], error: Error) {
        self.failures.push(SampleFailure { sample, point: point.to_vec(), error });
    }

    /// Largest residual of `kind` (NaN counts as infinite); 0 if none recorded.
    pub fn max(&self, kind: &str) -> f64 {
        self.residuals
            .iter()
            .filter(|r| r.kind == kind)
            .map(|r| if r.value.is_nan() { f64::INFINITY } else { r.value })
            .fold(0.0, f64::max)
    }

    pub fn kinds(&self) -> Vec<String> {
        let mut out: Vec<String> = self.limits.iter().map(|(k, _)| k.clone()).collect();
        for r in &self.residuals {
            if !out.contains(&r.kind) {
                out.push(r.kind.clone());
            }
        }
        out
    }

    /// Every limited kind within tolerance and no sample failed.
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.limits.iter().all(|(k, tol)| self.max(k) <= *tol)
    }

    /// Appends another report, shifting its sample indices by `offset`.
    pub fn merge(&mut self, other: CheckReport, offset: usize) {
        for (k, t) in other.limits {
            self.limit(&k, t);
        }
        self.residuals.extend(other.residuals.into_iter().map(|mut r| {
            r.sample += offset;
            r
        }));
        self.failures.extend(other.failures.into_iter().map(|mut f| {
            f.sample += offset;
            f
        }));
        self.probed_radius = match (self.probed_radius, other.probed_radius) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
    }
}

/// Relative residual `|a| / max(1, |reference|)`.
pub fn relative(abs: f64, reference: f64) -> f64 {
    abs / reference.abs().max(1.0)
}

/// Largest radius `r` such that every sample with radius `≤ r` succeeded.
pub fn probe_radius(radii_ok: &[(f64, bool)]) -> f64 {
    let mut sorted: Vec<(f64, bool)> = radii_ok.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = 0.0;
    for (r, ok) in sorted {
        if !ok {
            break;
        }
        best = r;
    }
    best
}
