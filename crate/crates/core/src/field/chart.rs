use crate::error::{Error, Result};

/// A coordinate box `Π [lo_i, hi_i]`; the single chart every field lives on.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartBox {
    name: String,
    bounds: Vec<(f64, f64)>,
}

impl ChartBox {
    pub fn new(name: impl Into<String>, bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::InvalidInput("chart dimension must be at least 1".into()));
        }
        Self::build(name.into(), bounds)
    }

    /// The zero-dimensional parameter space of a point transversal.
    pub fn point(name: impl Into<String>) -> Self {
        ChartBox { name: name.into(), bounds: Vec::new() }
    }

    /// Symmetric box `[c_i - r, c_i + r]`.
    pub fn around(name: impl Into<String>, center: &[f64], radius: f64) -> Result<Self> {
        let bounds = center.iter().map(|&c| (c - radius, c + radius)).collect();
        Self::build(name.into(), bounds)
    }

    fn build(name: String, bounds: Vec<(f64, f64)>) -> Result<Self> {
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::InvalidInput(format!(
                    "bound {} of chart `{name}` is not a finite nonempty interval",
                    i + 1
                )));
            }
        }
        Ok(ChartBox { name, bounds })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn center(&self) -> Vec<f64> {
        self.bounds.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.bounds.len()
            && x.iter().zip(&self.bounds).all(|(&v, &(lo, hi))| v >= lo && v <= hi)
    }

    pub fn check(&self, x: &[f64]) -> Result<()> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("point in chart `{}`", self.name)));
        }
        if !self.contains(x) {
            return Err(Error::OutOfDomain { chart: self.name.clone(), point: x.to_vec() });
        }
        Ok(())
    }
}
