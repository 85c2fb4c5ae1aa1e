use nalgebra::DMatrix;

use super::fields::BivectorField;
use crate::error::{Error, Result};
use crate::linalg;

/// Relative singular-value floor for rank and graph tests.
pub const RANK_FLOOR: f64 = 1e-8;

/// Lagrangian subspace of `TM ⊕ T*M` at a point, as the column span of `[A; C]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiracFrame {
    pub point: Vec<f64>,
    /// Tangent block.
    pub a: DMatrix<f64>,
    /// Cotangent block.
    pub c: DMatrix<f64>,
}

impl DiracFrame {
    pub fn new(point: Vec<f64>, a: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        if a.shape() != c.shape() || a.nrows() != a.ncols() {
            return Err(Error::InvalidInput(format!(
                "Dirac frame blocks must both be n×n, got {:?} and {:?}",
                a.shape(),
                c.shape()
            )));
        }
        Ok(DiracFrame { point, a, c })
    }

    /// `L_π` spanned by `(π ξ, ξ)`.
    pub fn graph_of_matrix(point: Vec<f64>, pi: DMatrix<f64>) -> Self {
        let n = pi.nrows();
        DiracFrame { point, a: pi, c: DMatrix::identity(n, n) }
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn stacked(&self) -> DMatrix<f64> {
        linalg::vstack(&self.a, &self.c)
    }

    /// `|AᵀC + CᵀA|∞ / ‖[A;C]‖₂²`.
    pub fn isotropy_residual(&self) -> f64 {
        let s = linalg::singular_extremes(&self.stacked()).1;
        if s == 0.0 {
            return 0.0;
        }
        let m = self.a.transpose() * &self.c + self.c.transpose() * &self.a;
        linalg::max_abs(&m) / (s * s)
    }

    /// `σ_min / σ_max` of `[A; C]`; at least [`RANK_FLOOR`] for a valid frame.
    pub fn rank_ratio(&self) -> f64 {
        linalg::conditioning_ratio(&self.stacked())
    }

    /// Right-multiplies the basis by an invertible matrix; the subspace is unchanged.
    pub fn rebased(&self, g: &DMatrix<f64>) -> Self {
        DiracFrame { point: self.point.clone(), a: &self.a * g, c: &self.c * g }
    }
}

/// Graph of `π(x)`.
pub fn dirac_graph(pi: &BivectorField, x: &[f64]) -> Result<DiracFrame> {
    Ok(DiracFrame::graph_of_matrix(x.to_vec(), pi.matrix(x)?))
}

/// Pullback of `L` along a submersion with Jacobian `dp` (rows index base
/// coordinates, columns index total coordinates) at the point `z`.
pub fn dirac_pullback(l: &DiracFrame, dp: &DMatrix<f64>, z: &[f64]) -> Result<DiracFrame> {
    let nb = l.dim();
    if dp.nrows() != nb {
        return Err(Error::InvalidInput(format!(
            "Jacobian has {} rows but the base frame has dimension {nb}",
            dp.nrows()
        )));
    }
    let nt = dp.ncols();
    if nb > 0 {
        let ratio = linalg::conditioning_ratio(dp);
        if nb > nt || !(ratio >= RANK_FLOOR) {
            return Err(Error::NotSubmersion { ratio: if nb > nt { 0.0 } else { ratio } });
        }
    }
    let lift = linalg::pinv(dp) * &l.a;
    let cot = dp.transpose() * &l.c;
    let k = linalg::kernel_basis(dp);
    debug_assert_eq!(k.ncols() + nb, nt);
    let a = linalg::hstack(&lift, &k);
    let c = linalg::hstack(&cot, &DMatrix::zeros(nt, k.ncols()));
    DiracFrame::new(z.to_vec(), a, c)
}

/// B-field transform `C' = C + B·A`.
pub fn dirac_gauge(l: &DiracFrame, b: &DMatrix<f64>) -> Result<DiracFrame> {
    if b.shape() != l.a.shape() {
        return Err(Error::InvalidInput("gauge 2-form has wrong shape".into()));
    }
    if linalg::antisymmetry_defect(b) > 1e-10 * linalg::max_abs(b).max(1.0) {
        return Err(Error::InvalidInput("gauge 2-form is not antisymmetric".into()));
    }
    Ok(DiracFrame { point: l.point.clone(), a: l.a.clone(), c: &l.c + b * &l.a })
}

/// `A C^{-1}` when the cotangent block is invertible.
pub fn dirac_to_bivector(l: &DiracFrame) -> Result<DMatrix<f64>> {
    let n = l.dim();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let smax = linalg::singular_extremes(&l.stacked()).1;
    let cmin = linalg::singular_extremes(&l.c).0;
    let ratio = if smax == 0.0 { 0.0 } else { cmin / smax };
    if !(ratio >= RANK_FLOOR) {
        return Err(Error::NotGraph { ratio });
    }
    // A C^{-1} = (C^{-T} Aᵀ)ᵀ
    let sol = l.c.transpose().lu().solve(&l.a.transpose()).ok_or(Error::NotGraph { ratio })?;
    Ok(linalg::antisymmetrize(&sol.transpose()))
}
