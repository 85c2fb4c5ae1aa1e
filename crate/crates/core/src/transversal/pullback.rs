use std::sync::Arc;

use nalgebra::DMatrix;

use super::data::{TransversalData, RANK_FLOOR};
use crate::error::{Error, Result};
use crate::field::jet::Dual;
use crate::field::{ChartBox, Expr, ExpressionField};
use crate::linalg;
use crate::report::{self, CheckReport};

/// A map between charts given componentwise by expressions.
#[derive(Debug, Clone)]
pub struct ExpressionMap {
    comps: Vec<ExpressionField>,
    source: Arc<ChartBox>,
}

impl ExpressionMap {
    pub fn new(source: Arc<ChartBox>, comps: Vec<Expr>) -> Result<Self> {
        let comps = comps
            .into_iter()
            .map(|e| ExpressionField::new(e, source.clone()))
            .collect::<Result<_>>()?;
        Ok(ExpressionMap { comps, source })
    }

    /// Value and exact Jacobian (`target_dim × source_dim`).
    pub fn eval(&self, x: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        self.source.check(x)?;
        let value = self.comps.iter().map(|c| c.eval_generic(x)).collect::<Result<Vec<_>>>()?;
        let mut d = DMatrix::zeros(self.comps.len(), x.len());
        let mut xs: Vec<Dual<f64>> = x.iter().map(|&v| Dual::constant(v)).collect();
        for l in 0..x.len() {
            xs[l].eps = 1.0;
            for (i, c) in self.comps.iter().enumerate() {
                d[(i, l)] = c.eval_generic(&xs)?.eps;
            }
            xs[l].eps = 0.0;
        }
        Ok((value, d))
    }
}

/// Tolerances for [`check_pullback_transversal`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PullbackOptions {
    pub tol_poisson: f64,
    pub tol: f64,
}

impl Default for PullbackOptions {
    fn default() -> Self {
        PullbackOptions { tol_poisson: 1e-8, tol: 1e-6 }
    }
}

/// For a Poisson map `φ: (M₁, π₁) → (M₂, π₂)` and a transversal `X₂`, checks at
/// sample pairs `(x, y)` with `φ(x) = χ₂(y)` that `φ` is transverse to `X₂`,
/// that `φ^{-1}(X₂)` is a transversal of `π₁`, and that the induced map is Poisson.
pub fn check_pullback_transversal<P, Q>(
    phi: P,
    pi1: Q,
    td2: &TransversalData,
    samples: &[(Vec<f64>, Vec<f64>)],
    opts: &PullbackOptions,
) -> CheckReport
where
    P: Fn(&[f64]) -> Result<(Vec<f64>, DMatrix<f64>)>,
    Q: Fn(&[f64]) -> Result<DMatrix<f64>>,
{
    let mut r = CheckReport::new();
    r.limit("poisson-map", opts.tol_poisson);
    r.limit("on-transversal", opts.tol_poisson);
    r.limit("map-transversality", 0.5);
    r.limit("preimage-eq3", 0.5);
    r.limit("induced-poisson", opts.tol);
    for (i, (x, y)) in samples.iter().enumerate() {
        if let Err(e) = pullback_sample(&phi, &pi1, td2, x, y, opts, i, &mut r) {
            r.fail(i, x, e);
        }
    }
    r
}

#[allow(clippy::too_many_arguments)]
fn pullback_sample<P, Q>(
    phi: &P,
    pi1: &Q,
    td2: &TransversalData,
    x: &[f64],
    y: &[f64],
    opts: &PullbackOptions,
    i: usize,
    r: &mut CheckReport,
) -> Result<()>
where
    P: Fn(&[f64]) -> Result<(Vec<f64>, DMatrix<f64>)>,
    Q: Fn(&[f64]) -> Result<DMatrix<f64>>,
{
    let (fx, dphi) = phi(x)?;
    let p1 = pi1(x)?;
    let f2 = td2.frames(y)?;
    let poisson = report::relative(
        linalg::max_abs(&(&dphi * &p1 * dphi.transpose() - &f2.pi)),
        linalg::max_abs(&f2.pi),
    );
    r.push(i, x, "poisson-map", poisson);
    if poisson > opts.tol_poisson {
        return Err(Error::NotPoissonMap { residual: poisson });
    }
    let gap = fx.iter().zip(&f2.x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    r.push(i, x, "on-transversal", gap);

    // φ ⋔ X₂: image of dφ together with TX₂ spans the target.
    let n2 = f2.pi.nrows();
    let span = linalg::hstack(&dphi, &f2.tangent);
    let sv = span.singular_values();
    let rank = sv.iter().filter(|&&s| s > RANK_FLOOR * sv.max().max(1.0)).count();
    r.push(i, x, "map-transversality", (n2 - rank.min(n2)) as f64);

    // X₁ = φ^{-1}(X₂): conormal dφᵀN₂, tangent ker(N₂ᵀ dφ).
    let conormal1 = dphi.transpose() * &f2.conormal;
    let tangent1 = linalg::kernel_basis(&conormal1.transpose());
    let n1 = x.len();
    let b1 = linalg::hstack(&tangent1, &(&p1 * &conormal1));
    let ok = b1.ncols() == n1 && linalg::conditioning_ratio(&b1) >= RANK_FLOOR;
    r.push(i, x, "preimage-eq3", if ok { 0.0 } else { 1.0 });
    if !ok {
        return Err(Error::NotTransversal { param: y.to_vec(), sigma_min: linalg::singular_extremes(&b1).0 });
    }

    // Induced bivectors as ambient tangent tensors: dφ(T₁ π_{X₁} T₁ᵀ)dφᵀ = T₂ π_{X₂} T₂ᵀ.
    let k1 = tangent1.ncols();
    let binv = b1.try_inverse().ok_or(Error::NotInvertible { ratio: 0.0 })?;
    let p = &binv * &p1 * binv.transpose();
    let pi_x1 = p.view((0, 0), (k1, k1)).into_owned();
    let lhs = &dphi * &tangent1 * pi_x1 * tangent1.transpose() * dphi.transpose();
    let rhs = &f2.tangent * &f2.pi_x * f2.tangent.transpose();
    r.push(i, x, "induced-poisson", report::relative(linalg::max_abs(&(lhs - &rhs)), linalg::max_abs(&rhs)));
    Ok(())
}
