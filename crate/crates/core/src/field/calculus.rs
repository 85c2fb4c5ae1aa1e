use nalgebra::{DMatrix, DVector};

use super::chart::ChartBox;
use super::fields::{BivectorField, TwoFormField};
use crate::error::{Error, Result};
use crate::linalg;

/// Relative singular-value floor of `I + Bπ` below which a gauge is rejected.
pub const GAUGE_RATIO_FLOOR: f64 = 1e-10;

/// Dense `n×n×n` array; used for Jacobiators and 3-forms.
#[derive(Debug, Clone, PartialEq)]
pub struct Alternating3 {
    n: usize,
    data: Vec<f64>,
}

impl Alternating3 {
    pub fn zeros(n: usize) -> Self {
        Alternating3 { n, data: vec![0.0; n * n * n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.n + j) * self.n + k]
    }

    fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.data[(i * self.n + j) * self.n + k] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Fills all six permutations of `(i, j, k)` from one value.
    fn set_alternating(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.set(i, j, k, v);
        self.set(j, k, i, v);
        self.set(k, i, j, v);
        self.set(j, i, k, -v);
        self.set(i, k, j, -v);
        self.set(k, j, i, -v);
    }
}

/// `(π♯ξ)^i = Σ_j π^{ij}(x) ξ_j`.
pub fn sharp(pi: &BivectorField, x: &[f64], xi: &[f64]) -> Result<DVector<f64>> {
    if xi.len() != pi.dim() {
        return Err(Error::InvalidInput("covector has wrong length".into()));
    }
    Ok(pi.matrix(x)? * DVector::from_column_slice(xi))
}

/// Jacobiator from a matrix and its partials `∂_l π`.
pub fn jacobiator_from(pi: &DMatrix<f64>, partials: &[DMatrix<f64>]) -> Alternating3 {
    let n = pi.nrows();
    let mut j = Alternating3::zeros(n);
    let term = |a: usize, b: usize, c: usize| -> f64 {
        (0..n).map(|l| pi[(a, l)] * partials[l][(b, c)]).sum()
    };
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                let v = term(a, b, c) + term(b, c, a) + term(c, a, b);
                j.set_alternating(a, b, c, v);
            }
        }
    }
    j
}

/// `J^{ijk} = Σ_l (π^{il}∂_l π^{jk} + π^{jl}∂_l π^{ki} + π^{kl}∂_l π^{ij})` with exact partials.
pub fn jacobiator(pi: &BivectorField, x: &[f64]) -> Result<Alternating3> {
    let (m, partials) = pi.matrix_with_partials(x)?;
    Ok(jacobiator_from(&m, &partials))
}

/// Central-difference partials `∂_l F(x)` of a matrix-valued map.
pub fn matrix_partials_fd<F>(f: F, x: &[f64], h: f64) -> Result<Vec<DMatrix<f64>>>
where
    F: Fn(&[f64]) -> Result<DMatrix<f64>>,
{
    let mut xs = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for l in 0..x.len() {
        xs[l] = x[l] + h;
        let plus = f(&xs)?;
        xs[l] = x[l] - h;
        let minus = f(&xs)?;
        xs[l] = x[l];
        out.push((plus - minus) / (2.0 * h));
    }
    Ok(out)
}

/// Jacobiator of a pointwise bivector map, partials by central differences.
pub fn jacobiator_fd<F>(f: F, x: &[f64], h: f64) -> Result<Alternating3>
where
    F: Fn(&[f64]) -> Result<DMatrix<f64>>,
{
    let m = f(x)?;
    let partials = matrix_partials_fd(&f, x, h)?;
    Ok(jacobiator_from(&m, &partials))
}

/// `π^B = π(I + Bπ)^{-1}` for matrices; `t` and `x` only label the error.
pub fn gauge_matrix(pi: &DMatrix<f64>, b: &DMatrix<f64>, t: f64, x: &[f64]) -> Result<DMatrix<f64>> {
    let n = pi.nrows();
    let m = DMatrix::identity(n, n) + b * pi;
    let ratio = linalg::conditioning_ratio(&m);
    if !(ratio >= GAUGE_RATIO_FLOOR) {
        return Err(Error::SingularGauge { t, point: x.to_vec(), ratio });
    }
    // π(I+Bπ)^{-1} = ((I+Bπ)^{-T} πᵀ)ᵀ, solved rather than inverted
    let lu = m.transpose().lu();
    let sol = lu
        .solve(&pi.transpose())
        .ok_or(Error::SingularGauge { t, point: x.to_vec(), ratio })?;
    Ok(linalg::antisymmetrize(&sol.transpose()))
}

/// Gauge transform of `π` by the closed 2-form `B` at `x`.
pub fn gauge_bivector(pi: &BivectorField, b: &TwoFormField, x: &[f64]) -> Result<DMatrix<f64>> {
    if pi.dim() != b.dim() {
        return Err(Error::InvalidInput("bivector and 2-form dimensions differ".into()));
    }
    gauge_matrix(&pi.matrix(x)?, &b.matrix(x)?, 1.0, x)
}

/// `(dω)_{ijk} = ∂_i ω_{jk} + ∂_j ω_{ki} + ∂_k ω_{ij}` by central differences.
///
/// When `chart` is given the whole stencil must lie in it.
pub fn exterior_derivative_numeric<F>(
    omega: F,
    x: &[f64],
    h: f64,
    chart: Option<&ChartBox>,
) -> Result<Alternating3>
where
    F: Fn(&[f64]) -> Result<DMatrix<f64>>,
{
    if let Some(c) = chart {
        let mut xs = x.to_vec();
        for l in 0..x.len() {
            for s in [h, -h] {
                xs[l] = x[l] + s;
                c.check(&xs)?;
            }
            xs[l] = x[l];
        }
    }
    let d = matrix_partials_fd(omega, x, h)?;
    let n = x.len();
    let mut out = Alternating3::zeros(n);
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let v = d[i][(j, k)] + d[j][(k, i)] + d[k][(i, j)];
                out.set_alternating(i, j, k, v);
            }
        }
    }
    Ok(out)
}
