use nalgebra::DMatrix;

use super::embedding::Embedding;
use crate::error::{Error, Result};
use crate::field::{jacobiator_fd, BivectorField};
use crate::linalg;

/// Relative singular-value floor for immersion, transversality and frame checks.
pub const RANK_FLOOR: f64 = 1e-8;

/// Pointwise data of a transversal at one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Frames {
    pub y: Vec<f64>,
    pub x: Vec<f64>,
    /// Tangent frame `dχ(y)`, `n×k`.
    pub tangent: DMatrix<f64>,
    /// Orthonormal conormal frame, `n×(n−k)`.
    pub conormal: DMatrix<f64>,
    pub pi: DMatrix<f64>,
    /// Induced bivector on the parameter chart, `k×k`.
    pub pi_x: DMatrix<f64>,
    /// `π(N_a, N_b)`, `(n−k)×(n−k)`.
    pub w_x: DMatrix<f64>,
    /// Largest entry of the tangent/normal cross block of `π` in the basis `(T, πN)`.
    pub mixed: f64,
    /// `σ_min/σ_max` of `[T | πN]`.
    pub eq3_ratio: f64,
}

/// The three pointwise transversality criteria.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Criteria {
    /// `π♯` injective on the conormal space.
    pub eq1: bool,
    /// `TX ∩ π♯(N*X) = 0`.
    pub eq2: bool,
    /// `[T | π♯N]` invertible.
    pub eq3: bool,
}

/// A verified Poisson transversal with its conormal reference frame choice.
#[derive(Debug, Clone)]
pub struct TransversalData {
    pi: BivectorField,
    embedding: Embedding,
    /// Reference coframe indices, fixed at the center of the parameter box.
    reference: Vec<usize>,
}

fn tangent_projector(t: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = t.nrows();
    if t.ncols() == 0 {
        return Ok(DMatrix::identity(n, n));
    }
    let gram = t.transpose() * t;
    let inv = linalg::checked_inverse(&gram, RANK_FLOOR * RANK_FLOOR)?;
    Ok(DMatrix::identity(n, n) - t * inv * t.transpose())
}

/// Greedy pivoted choice of `c` reference columns of the projector.
fn select_reference(proj: &DMatrix<f64>, c: usize) -> Vec<usize> {
    let n = proj.nrows();
    let mut chosen: Vec<usize> = Vec::with_capacity(c);
    let mut basis: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(c);
    for _ in 0..c {
        let mut best: Option<(usize, f64, nalgebra::DVector<f64>)> = None;
        for i in (0..n).filter(|i| !chosen.contains(i)) {
            let mut v = proj.column(i).into_owned();
            for b in &basis {
                v -= b * b.dot(&v);
            }
            let nv = v.norm();
            if best.as_ref().is_none_or(|(_, bn, _)| nv > bn + 1e-12) {
                best = Some((i, nv, v));
            }
        }
        let (i, nv, v) = best.expect("enough candidate columns");
        chosen.push(i);
        basis.push(if nv > 0.0 { v / nv } else { v });
    }
    chosen
}

impl TransversalData {
    pub fn pi(&self) -> &BivectorField {
        &self.pi
    }

    pub fn embedding(&self) -> &Embedding {
        &self.embedding
    }

    pub fn k(&self) -> usize {
        self.embedding.param_dim()
    }

    pub fn n(&self) -> usize {
        self.embedding.ambient_dim()
    }

    pub fn codim(&self) -> usize {
        self.n() - self.k()
    }

    pub fn reference_indices(&self) -> &[usize] {
        &self.reference
    }

    /// Conormal frame at `y` (no parameter-box check, for stencils).
    pub fn conormal_frame(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        let t = self.embedding.jacobian_unchecked(y)?;
        let proj = tangent_projector(&t).map_err(|_| Error::NotImmersion { param: y.to_vec() })?;
        let n = self.n();
        let mut cols: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(self.reference.len());
        for &i in &self.reference {
            let mut v = proj.column(i).into_owned();
            for b in &cols {
                v -= b * b.dot(&v);
            }
            let nv = v.norm();
            if !(nv >= RANK_FLOOR) {
                return Err(Error::FrameDegeneracy { param: y.to_vec() });
            }
            cols.push(v / nv);
        }
        if cols.is_empty() {
            Ok(DMatrix::zeros(n, 0))
        } else {
            Ok(DMatrix::from_columns(&cols))
        }
    }

    /// All pointwise data at `y`; the parameter box is not enforced.
    pub fn frames_unchecked(&self, y: &[f64]) -> Result<Frames> {
        let x = self.embedding.eval_unchecked(y)?;
        let tangent = self.embedding.jacobian_unchecked(y)?;
        let k = self.k();
        if k > 0 && !(linalg::conditioning_ratio(&tangent) >= RANK_FLOOR) {
            return Err(Error::NotImmersion { param: y.to_vec() });
        }
        let conormal = self.conormal_frame(y)?;
        let pi = self.pi.matrix(&x)?;
        let pin = &pi * &conormal;
        let b = linalg::hstack(&tangent, &pin);
        let (smin, smax) = linalg::singular_extremes(&b);
        let eq3_ratio = if smax == 0.0 { 0.0 } else { smin / smax };
        if !(eq3_ratio >= RANK_FLOOR) {
            return Err(Error::NotTransversal { param: y.to_vec(), sigma_min: smin });
        }
        let binv = b.clone().try_inverse().ok_or(Error::NotTransversal { param: y.to_vec(), sigma_min: smin })?;
        let p = &binv * &pi * binv.transpose();
        let pi_x = linalg::antisymmetrize(&p.view((0, 0), (k, k)).into_owned());
        let mixed = linalg::max_abs(&p.view((0, k), (k, self.codim())).into_owned());
        let w_x = linalg::antisymmetrize(&(conormal.transpose() * &pi * &conormal));
        Ok(Frames { y: y.to_vec(), x, tangent, conormal, pi, pi_x, w_x, mixed, eq3_ratio })
    }

    pub fn frames(&self, y: &[f64]) -> Result<Frames> {
        self.embedding.params().check(y)?;
        let f = self.frames_unchecked(y)?;
        self.embedding.ambient().check(&f.x)?;
        Ok(f)
    }

    /// `(π_X(y), w_X(y))`.
    pub fn split_restriction(&self, y: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let f = self.frames(y)?;
        Ok((f.pi_x, f.w_x))
    }

    /// Jacobiator of `y ↦ π_X(y)` with central differences of step `h`.
    pub fn pi_x_jacobiator(&self, y: &[f64], h: f64) -> Result<f64> {
        if self.k() < 3 {
            return Ok(0.0);
        }
        Ok(jacobiator_fd(|p| Ok(self.frames_unchecked(p)?.pi_x), y, h)?.max_abs())
    }

    /// Evaluates EQ1, EQ2, EQ3 separately at `y`.
    pub fn criteria(&self, y: &[f64]) -> Result<Criteria> {
        let x = self.embedding.eval(y)?;
        let t = self.embedding.jacobian(y)?;
        let n = self.conormal_frame(y)?;
        let pi = self.pi.matrix(&x)?;
        let pin = &pi * &n;
        let scale = linalg::singular_extremes(&pi).1.max(1.0);
        let rank = |m: &DMatrix<f64>| -> usize {
            if m.is_empty() {
                return 0;
            }
            m.singular_values().iter().filter(|&&s| s > RANK_FLOOR * scale).count()
        };
        let eq1 = rank(&pin) == n.ncols();
        let b = linalg::hstack(&t, &pin);
        let eq2 = rank(&b) == rank(&t) + rank(&pin);
        let eq3 = rank(&b) == self.n();
        Ok(Criteria { eq1, eq2, eq3 })
    }

    /// `max |π(ξ, η)|` over conormal `ξ` and `η` annihilating `π♯(N*X)`.
    pub fn mixed_residual(&self, y: &[f64]) -> Result<f64> {
        let f = self.frames(y)?;
        let pin = &f.pi * &f.conormal;
        let eta = linalg::kernel_basis(&pin.transpose());
        Ok(linalg::max_abs(&(f.conormal.transpose() * &f.pi * eta)))
    }

    /// `|N(y+δ) − N(y)| / |δ|` along each parameter direction.
    pub fn frame_continuity(&self, y: &[f64], delta: f64) -> Result<f64> {
        let n0 = self.conormal_frame(y)?;
        let mut worst: f64 = 0.0;
        let mut yp = y.to_vec();
        for l in 0..y.len() {
            yp[l] = y[l] + delta;
            let n1 = self.conormal_frame(&yp)?;
            worst = worst.max(linalg::max_abs(&(n1 - &n0)) / delta);
            yp[l] = y[l];
        }
        Ok(worst)
    }
}

/// Verifies that `e` is a Poisson transversal of `π` at every parameter in `params`.
pub fn check_transversal(pi: &BivectorField, e: &Embedding, params: &[Vec<f64>]) -> Result<TransversalData> {
    if pi.dim() != e.ambient_dim() {
        return Err(Error::InvalidInput("bivector and embedding live on different dimensions".into()));
    }
    let center = e.params().center();
    let t = e.jacobian_unchecked(&center)?;
    if e.param_dim() > 0 && !(linalg::conditioning_ratio(&t) >= RANK_FLOOR) {
        return Err(Error::NotImmersion { param: center });
    }
    let proj = tangent_projector(&t).map_err(|_| Error::NotImmersion { param: center.clone() })?;
    let reference = select_reference(&proj, e.ambient_dim() - e.param_dim());
    let td = TransversalData { pi: pi.clone(), embedding: e.clone(), reference };
    td.frames(&center)?;
    for y in params {
        td.frames(y)?;
    }
    Ok(td)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::field::{ChartBox, Expr};

    fn so3() -> BivectorField {
        let c = Arc::new(ChartBox::new("so3", vec![(-2.0, 2.0); 3]).unwrap());
        let s = |i: usize, j: usize, e: &str| ((i, j), Expr::parse(e).unwrap());
        BivectorField::new(c, vec![s(0, 1, "x3"), s(0, 2, "-x2"), s(1, 2, "x1")]).unwrap()
    }

    fn curve(pi: &BivectorField, comps: [&str; 3], lo: f64, hi: f64) -> Embedding {
        let p = Arc::new(ChartBox::new("y", vec![(lo, hi)]).unwrap());
        Embedding::new(p, pi.chart().clone(), comps.iter().map(|s| Expr::parse(s).unwrap()).collect()).unwrap()
    }

    #[test]
    fn so3_axis_split() {
        let pi = so3();
        let e = curve(&pi, ["0", "0", "1+x1"], -0.2, 0.2);
        let td = check_transversal(&pi, &e, &[vec![-0.2], vec![0.1]]).unwrap();
        assert_eq!(td.reference_indices(), &[0, 1]);
        let (px, w) = td.split_restriction(&[0.1]).unwrap();
        assert_eq!(px, DMatrix::zeros(1, 1));
        assert!(linalg::max_abs(&(w - DMatrix::from_row_slice(2, 2, &[0.0, 1.1, -1.1, 0.0]))) < 1e-15);
        let c = td.criteria(&[0.0]).unwrap();
        assert!(c.eq1 && c.eq2 && c.eq3);
        assert!(td.mixed_residual(&[0.05]).unwrap() <= 1e-10);
    }

    #[test]
    fn origin_is_not_transversal() {
        let pi = so3();
        let e = curve(&pi, ["x1", "0", "0"], -0.2, 0.2);
        let err = check_transversal(&pi, &e, &[vec![0.1], vec![0.0]]).unwrap_err();
        assert!(matches!(err, Error::NotTransversal { ref param, .. } if param == &vec![0.0]));
    }

    #[test]
    fn curved_conormal_frame() {
        let pi = so3();
        let e = curve(&pi, ["x1", "x1^2", "1"], -0.3, 0.3);
        let td = TransversalData { pi: pi.clone(), embedding: e.clone(), reference: vec![1, 2] };
        let y = 0.2_f64;
        let n = td.conormal_frame(&[y]).unwrap();
        let s = (1.0 + 4.0 * y * y).sqrt();
        let expect = DMatrix::from_row_slice(3, 2, &[-2.0 * y / s, 0.0, 1.0 / s, 0.0, 0.0, 1.0]);
        assert!(linalg::max_abs(&(n - expect)) < 1e-14);
        assert!(td.frame_continuity(&[y], 1e-6).unwrap() < 3.0);
    }

    #[test]
    fn immersion_required() {
        let pi = so3();
        let e = curve(&pi, ["0", "0", "1+x1^2"], -0.2, 0.2);
        assert!(matches!(check_transversal(&pi, &e, &[]), Err(Error::NotImmersion { .. })));
    }
}
