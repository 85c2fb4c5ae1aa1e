use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::group::GroupAction;
use crate::error::{Error, Result};
use crate::field::{BivectorField, ChartBox};
use crate::linalg;
use crate::spray::{geodesic_flow, CotangentChart, SprayField};
use crate::transversal::{check_transversal, Embedding, TransversalData};

/// Singular-value threshold (relative to `σ_max`) for the rank of `π(x₀)`.
pub const RANK_THRESHOLD: f64 = 1e-8;

/// Cotangent lift `(x, ξ) ↦ (x₀ + g(x − x₀), g^{-T} ξ)`.
pub fn cotangent_lift(action: &GroupAction, g: &DMatrix<f64>, z: &[f64]) -> Result<Vec<f64>> {
    let n = action.dim();
    let ginv_t = linalg::checked_inverse(g, 1e-10)?.transpose();
    let mut out = action.act(g, &z[..n]);
    out.extend((ginv_t * DVector::from_column_slice(&z[n..])).iter());
    Ok(out)
}

/// `(g#)^* 𝒳` for a constant vertical term: `Γ^g(ξ) = gᵀ Γ(g^{-T} ξ)`.
fn transformed_gamma(gamma: &[f64], g: &DMatrix<f64>, n: usize) -> Result<Vec<f64>> {
    let h = linalg::checked_inverse(g, 1e-10)?.transpose();
    let mut out = vec![0.0; n * n * n];
    // first contract the two lower slots with h, then the upper one with gᵀ
    let mut tmp = vec![0.0; n * n * n];
    for l in 0..n {
        let gl = DMatrix::from_row_slice(n, n, &gamma[l * n * n..(l + 1) * n * n]);
        let c = h.transpose() * gl * &h;
        tmp[l * n * n..(l + 1) * n * n].copy_from_slice(c.transpose().as_slice());
    }
    for k in 0..n {
        for l in 0..n {
            let w = g[(l, k)];
            if w != 0.0 {
                for ab in 0..n * n {
                    out[k * n * n + ab] += w * tmp[l * n * n + ab];
                }
            }
        }
    }
    Ok(out)
}

/// Haar average of `(g#)^* 𝒳`. The base part `π ξ` is already invariant for
/// Poisson actions, so only the vertical coefficients change.
pub fn invariant_spray(spray: &SprayField, action: &GroupAction) -> Result<SprayField> {
    let Some(gamma) = spray.gamma() else {
        return Ok(spray.clone());
    };
    let n = spray.dim();
    let mut avg = vec![0.0; n * n * n];
    for (g, w) in action.elements() {
        for (a, v) in avg.iter_mut().zip(transformed_gamma(gamma, g, n)?) {
            *a += w * v;
        }
    }
    if avg.iter().all(|v| v.abs() <= 1e-15 * gamma.iter().fold(0.0f64, |m, x| m.max(x.abs()))) {
        return Ok(SprayField::flat(spray.pi().clone()));
    }
    SprayField::with_quadratic(spray.pi().clone(), avg)
}

/// `max |φᵗ(g# z) − g# φᵗ(z)|∞` over `tests`.
pub fn spray_equivariance_residual(
    spray: &SprayField,
    chart: &CotangentChart,
    action: &GroupAction,
    tests: &[DMatrix<f64>],
    z: &[f64],
    t: f64,
    steps: usize,
) -> Result<f64> {
    let base = geodesic_flow(spray, chart, z, t, steps)?;
    let mut worst: f64 = 0.0;
    for g in tests {
        let moved = geodesic_flow(spray, chart, &cotangent_lift(action, g, z)?, t, steps)?;
        let lifted = cotangent_lift(action, g, &base.state)?;
        worst = worst.max(moved.state.iter().zip(&lifted).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    Ok(worst)
}

/// Even numerical rank of `π(x₀)` and an orthonormal basis of its image.
pub fn leaf_tangent(pi0: &DMatrix<f64>) -> Result<(usize, DMatrix<f64>)> {
    let n = pi0.nrows();
    let svd = pi0.clone().svd(true, false);
    let smax = svd.singular_values.max();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let rank = order.iter().filter(|&&i| svd.singular_values[i] > RANK_THRESHOLD * smax).count();
    if rank % 2 == 1 {
        return Err(Error::RankOddity { rank });
    }
    let u = svd.u.expect("requested");
    let mut t = DMatrix::zeros(n, rank);
    for (c, &i) in order.iter().take(rank).enumerate() {
        t.set_column(c, &u.column(i));
    }
    Ok((rank, t))
}

/// A `G`-invariant affine transversal through `x₀`: the orthogonal complement
/// of `T_{x₀}L = im π(x₀)` for the averaged inner product, as `y ↦ x₀ + K y`
/// over `[−h, h]^m`.
pub fn invariant_transversal(pi: &BivectorField, action: &GroupAction, half_width: f64) -> Result<TransversalData> {
    let x0 = action.x0().to_vec();
    let n = pi.dim();
    if x0.len() != n {
        return Err(Error::InvalidInput("fixed point has the wrong dimension".into()));
    }
    pi.chart().check(&x0)?;
    let (rank, t) = leaf_tangent(&pi.matrix(&x0)?)?;
    let metric = action.invariant_metric();
    let m = n - rank;
    let k = if m == 0 { DMatrix::zeros(n, 0) } else { linalg::kernel_basis(&(t.transpose() * metric)) };
    if k.ncols() != m {
        return Err(Error::NotTransversal { param: vec![], sigma_min: 0.0 });
    }
    let params = if m == 0 {
        Arc::new(ChartBox::point("y"))
    } else {
        Arc::new(ChartBox::new("y", vec![(-half_width, half_width); m])?)
    };
    let e = Embedding::affine(params.clone(), pi.chart().clone(), &x0, &k)?;
    let probes = vec![params.center()];
    check_transversal(pi, &e, &probes)
}

/// `K⁺ g K`, the action induced on the parameters of an affine invariant transversal,
/// and the invariance defect `|g K − K K⁺ g K|`.
pub fn induced_linear_action(k: &DMatrix<f64>, g: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let kp = linalg::pinv(k);
    let l = &kp * g * k;
    let defect = if k.ncols() == 0 { 0.0 } else { linalg::max_abs(&(g * k - k * &l)) };
    (l, defect)
}
