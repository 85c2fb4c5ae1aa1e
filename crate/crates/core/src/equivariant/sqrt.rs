use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::report::CheckReport;
use crate::sampling::Sampler;

/// Minimum distance of the spectrum from `(−∞, 0]`, relative to `max(1, ρ(M))`.
pub const CUT_DISTANCE: f64 = 1e-8;
const SQRT_TOL: f64 = 1e-12;
const SQRT_MAX_ITER: usize = 100;

/// Distance of the spectrum of `m` from the closed negative real axis.
pub fn cut_distance(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|l| if l.re <= 0.0 { l.im.abs() } else { l.norm() })
        .fold(f64::INFINITY, f64::min)
}

/// Principal square root by the determinant-scaled Denman–Beavers iteration.
pub fn principal_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::InvalidInput("square root of a non-square matrix".into()));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("square root input".into()));
    }
    let scale = m.complex_eigenvalues().iter().map(|l| l.norm()).fold(1.0, f64::max);
    let distance = cut_distance(m);
    if !(distance > CUT_DISTANCE * scale) {
        return Err(Error::SpectrumOnCut { distance });
    }
    let mut y = m.clone();
    let mut z = DMatrix::identity(n, n);
    let mut scaling = true;
    for _ in 0..SQRT_MAX_ITER {
        let yi = y.clone().try_inverse().ok_or(Error::SpectrumOnCut { distance })?;
        let zi = z.clone().try_inverse().ok_or(Error::SpectrumOnCut { distance })?;
        let mu = if scaling { f64::abs(y.determinant() * z.determinant()).powf(-0.5 / n as f64) } else { 1.0 };
        let y_next = (&y * mu + zi / mu) * 0.5;
        let z_next = (&z * mu + yi / mu) * 0.5;
        let change = linalg::max_abs(&(&y_next - &y)) / linalg::max_abs(&y_next).max(f64::MIN_POSITIVE);
        y = y_next;
        z = z_next;
        if change < 1e-2 {
            scaling = false;
        }
        if change <= SQRT_TOL {
            return Ok(y);
        }
    }
    let defect = linalg::max_abs(&(&y * &y - m)) / linalg::max_abs(m).max(1.0);
    if defect <= 1e-10 {
        Ok(y)
    } else {
        Err(Error::NonFinite(format!("square root iteration stalled with defect {defect:e}")))
    }
}

/// A symplectic reference form `ω₀` and a nearby candidate `ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticPair {
    omega0: DMatrix<f64>,
    omega: DMatrix<f64>,
}

impl SymplecticPair {
    pub fn new(omega0: DMatrix<f64>, omega: DMatrix<f64>) -> Result<Self> {
        let n = omega0.nrows();
        if omega0.shape() != (n, n) || omega.shape() != (n, n) || !n.is_multiple_of(2) {
            return Err(Error::InvalidInput("symplectic pair needs two even square matrices of one size".into()));
        }
        for (name, m) in [("ω₀", &omega0), ("ω", &omega)] {
            if linalg::antisymmetry_defect(m) > 1e-12 * linalg::max_abs(m).max(1.0) {
                return Err(Error::InvalidInput(format!("{name} is not antisymmetric")));
            }
        }
        linalg::checked_inverse(&omega0, 1e-10)?;
        Ok(SymplecticPair { omega0, omega })
    }

    pub fn omega0(&self) -> &DMatrix<f64> {
        &self.omega0
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }
}

/// `b_ω = √(ω₀^{-1} ω)`, so that `b_ωᵀ ω₀ b_ω = ω` and `b_{ω₀} = I`.
pub fn b_map(sp: &SymplecticPair) -> Result<DMatrix<f64>> {
    let m = sp.omega0.clone().lu().solve(&sp.omega).ok_or(Error::NotInvertible { ratio: 0.0 })?;
    principal_sqrt(&m)
}

/// Seeded trials of the three b-map identities in dimensions `2m` for `m`
/// in `halves`: `b_{ω₀} = I`, `bᵀω₀b = ω`, and `s^{-1} b_ω s = b_{sᵀωs}`
/// for symplectic `s = exp(ω₀^{-1}H)`. Each `ω` has `|ω − ω₀|∞ = radius`.
pub fn b_map_trials(halves: &[usize], trials: usize, radius: f64, seed: u64) -> CheckReport {
    let mut r = CheckReport::new();
    r.limit("b-identity", 1e-12);
    r.limit("b-pullback", 1e-10);
    r.limit("b-equivariance", 1e-9);
    let mut s = Sampler::new(seed);
    let mut sample = 0;
    for &m in halves {
        let n = 2 * m;
        let w0 = linalg::omega_std(m);
        let w0_inv = -&w0;
        let point = [n as f64];
        match b_map(&SymplecticPair { omega0: w0.clone(), omega: w0.clone() }) {
            Ok(b) => r.push(sample, &point, "b-identity", linalg::max_abs(&(b - DMatrix::identity(n, n)))),
            Err(e) => r.fail(sample, &point, e),
        }
        for _ in 0..trials {
            sample += 1;
            let raw = DMatrix::from_fn(n, n, |_, _| s.uniform(-1.0, 1.0));
            let e = linalg::antisymmetrize(&raw);
            let e = &e * (radius / linalg::max_abs(&e).max(f64::MIN_POSITIVE));
            let w = &w0 + e;
            let h = DMatrix::from_fn(n, n, |_, _| s.uniform(-radius, radius));
            let sp = linalg::expm(&(&w0_inv * (&h + h.transpose()) * 0.5));
            let run = |r: &mut CheckReport| -> Result<()> {
                let b = b_map(&SymplecticPair::new(w0.clone(), w.clone())?)?;
                r.push(sample, &point, "b-pullback", linalg::max_abs(&(b.transpose() * &w0 * &b - &w)));
                let moved = sp.transpose() * &w * &sp;
                let b2 = b_map(&SymplecticPair::new(w0.clone(), moved)?)?;
                let sp_inv = linalg::checked_inverse(&sp, 1e-10)?;
                r.push(sample, &point, "b-equivariance", linalg::max_abs(&(b2 - sp_inv * &b * &sp)));
                Ok(())
            };
            if let Err(e) = run(&mut r) {
                r.fail(sample, &point, e);
            }
        }
        sample += 1;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_and_identity() {
        let i = DMatrix::<f64>::identity(3, 3);
        assert!(linalg::max_abs(&(principal_sqrt(&i).unwrap() - &i)) == 0.0);
        assert!(linalg::max_abs(&(principal_sqrt(&(&i * 4.0)).unwrap() - &i * 2.0)) <= 1e-15);
    }

    #[test]
    fn rotation_half_angle() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let s = principal_sqrt(&m).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let expect = DMatrix::from_row_slice(2, 2, &[r, -r, r, r]);
        assert!(linalg::max_abs(&(&s - expect)) <= 1e-12);
        assert!(linalg::max_abs(&(&s * &s - m)) <= 1e-12);
    }

    #[test]
    fn negative_eigenvalue_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 2.0]);
        assert!(matches!(principal_sqrt(&m), Err(Error::SpectrumOnCut { .. })));
    }

    #[test]
    fn jordan_block() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let s = principal_sqrt(&m).unwrap();
        assert!(linalg::max_abs(&(&s * &s - &m)) <= 1e-12);
    }

    #[test]
    fn b_map_of_multiple() {
        let w0 = linalg::omega_std(2);
        let b = b_map(&SymplecticPair::new(w0.clone(), &w0 * 4.0).unwrap()).unwrap();
        assert!(linalg::max_abs(&(&b - DMatrix::identity(4, 4) * 2.0)) <= 1e-14);
        assert!(linalg::max_abs(&(b.transpose() * &w0 * &b - &w0 * 4.0)) <= 1e-13);
        let id = b_map(&SymplecticPair::new(w0.clone(), w0.clone()).unwrap()).unwrap();
        assert!(linalg::max_abs(&(id - DMatrix::identity(4, 4))) <= 1e-12);
    }
}
