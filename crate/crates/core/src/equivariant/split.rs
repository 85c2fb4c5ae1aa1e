use nalgebra::{DMatrix, DVector};

use super::group::{equivariant_trivialization, EquivariantBundle, GroupAction};
use super::invariant::{induced_linear_action, invariant_spray, invariant_transversal};
use crate::error::{Error, Result};
use crate::field::BivectorField;
use crate::linalg;
use crate::moser::{moser_point, primitive_unchecked, GaugeData, GaugeSource, EVAL_MARGIN, FLOW_FD_STEP};
use crate::par;
use crate::report::{self, CheckReport};
use crate::sampling::Sampler;
use crate::spray::{contravariant_exp, CotangentChart, SprayField};
use crate::transversal::model::FRAME_FD_STEP;
use crate::transversal::{
    conormal_chart, local_model_from, sigma_tilde, ConormalChart, Discretization, TransversalData,
};

/// Symplectic basis `D` with `Dᵀ S D = [[0, I], [−I, 0]]`, by symplectic Gram–Schmidt.
pub fn darboux_basis(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = s.nrows();
    if !n.is_multiple_of(2) || s.ncols() != n {
        return Err(Error::InvalidInput("Darboux basis needs an even square form".into()));
    }
    let form = |a: &DVector<f64>, b: &DVector<f64>| (a.transpose() * s * b)[0];
    let mut pool: Vec<DVector<f64>> = (0..n).map(|i| DVector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 })).collect();
    let (mut es, mut fs) = (Vec::new(), Vec::new());
    while !pool.is_empty() {
        let e = pool.remove(0);
        let (best, val) = pool
            .iter()
            .enumerate()
            .map(|(i, v)| (i, form(&e, v)))
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .ok_or(Error::NotInvertible { ratio: 0.0 })?;
        if !(val.abs() > 1e-12) {
            return Err(Error::NotInvertible { ratio: val.abs() });
        }
        let f = pool.remove(best) / val;
        for v in pool.iter_mut() {
            let (se, sf) = (form(&e, v), form(&f, v));
            *v = &*v - &f * se + &e * sf;
        }
        es.push(e);
        fs.push(f);
    }
    let mut d = DMatrix::zeros(n, n);
    for (i, (e, f)) in es.iter().zip(&fs).enumerate() {
        d.set_column(i, e);
        d.set_column(n / 2 + i, f);
    }
    Ok(d)
}

/// `N*X` over an affine invariant transversal, with fiber form `−w_X` and the
/// cotangent action in conormal frames.
pub struct ConormalBundle<'a> {
    td: &'a TransversalData,
    k_pinv: DMatrix<f64>,
    k: DMatrix<f64>,
}

impl<'a> ConormalBundle<'a> {
    pub fn new(td: &'a TransversalData) -> Result<Self> {
        let k = td.embedding().jacobian_unchecked(&vec![0.0; td.k()])?;
        Ok(ConormalBundle { td, k_pinv: linalg::pinv(&k), k })
    }
}

impl EquivariantBundle for ConormalBundle<'_> {
    fn fiber_dim(&self) -> usize {
        self.td.codim()
    }

    fn base_point(&self) -> Vec<f64> {
        vec![0.0; self.td.k()]
    }

    fn form(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        Ok(-self.td.frames_unchecked(y)?.w_x)
    }

    fn act(&self, g: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
        (&self.k_pinv * g * &self.k * DVector::from_column_slice(y)).as_slice().to_vec()
    }

    fn rep(&self, g: &DMatrix<f64>, y: &[f64]) -> Result<DMatrix<f64>> {
        let gy = self.act(g, y);
        let ginv_t = linalg::checked_inverse(g, 1e-10)?.transpose();
        Ok(linalg::pinv(&self.td.conormal_frame(&gy)?) * ginv_t * self.td.conormal_frame(y)?)
    }
}

/// Enlargement of the `N*X` evaluation chart relative to the configured one.
const FIBER_MARGIN: f64 = 1.5;

/// Parameters of [`weinstein_split`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitOptions {
    /// Half-width of the transversal parameter box.
    pub half_width: f64,
    pub fiber_radius: f64,
    pub disc: Discretization,
    pub moser_steps: usize,
    pub tol: f64,
    pub tol_group: f64,
}

impl Default for SplitOptions {
    fn default() -> Self {
        SplitOptions {
            half_width: 0.2,
            fiber_radius: 0.2,
            disc: Discretization { steps: 8, quad: 8 },
            moser_steps: 8,
            tol: 1e-4,
            tol_group: 1e-8,
        }
    }
}

/// Coordinates `(p, q, y)` around a fixed point in which `π` is the product of
/// the canonical symplectic structure and `π_X`, and `G` acts linearly.
pub struct Splitting {
    action: GroupAction,
    td: TransversalData,
    /// Evaluation chart on `N*X`, enlarged for stencils.
    cc: ConormalChart,
    spray: SprayField,
    chart: CotangentChart,
    sigma0: DMatrix<f64>,
    darboux: DMatrix<f64>,
    opts: SplitOptions,
}

/// Steps 1–4: invariant transversal, invariant spray, `σ̃_𝒳`, equivariant
/// trivialization and a Darboux frame of `σ_{x₀}`; the Moser step runs inside
/// [`Splitting::chart_map`].
pub fn weinstein_split(pi: &BivectorField, action: &GroupAction, opts: SplitOptions) -> Result<Splitting> {
    let td = invariant_transversal(pi, action, opts.half_width).map_err(|e| e.in_step("invariant transversal"))?;
    let spray = invariant_spray(&SprayField::flat(pi.clone()), action).map_err(|e| e.in_step("invariant spray"))?;
    let cc = conormal_chart(&td, opts.fiber_radius).map_err(|e| e.in_step("conormal chart"))?;
    let chart = CotangentChart::new(pi.chart().clone(), 2.0 * opts.fiber_radius * FIBER_MARGIN)?;
    let bundle = ConormalBundle::new(&td)?;
    let sigma0 = bundle.form(&bundle.base_point())?;
    let darboux = darboux_basis(&sigma0).map_err(|e| e.in_step("darboux frame"))?;
    Ok(Splitting { action: action.clone(), cc: cc.enlarged(FIBER_MARGIN), td, spray, chart, sigma0, darboux, opts })
}

impl Splitting {
    /// Symplectic dimension `2s`.
    pub fn symplectic_dim(&self) -> usize {
        self.td.codim()
    }

    /// Transversal dimension `m`.
    pub fn transversal_dim(&self) -> usize {
        self.td.k()
    }

    pub fn dim(&self) -> usize {
        self.td.n()
    }

    pub fn transversal(&self) -> &TransversalData {
        &self.td
    }

    pub fn options(&self) -> &SplitOptions {
        &self.opts
    }

    /// `Φ_y`, the equivariant trivialization of the conormal bundle.
    fn phi(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        let bundle = ConormalBundle::new(&self.td)?;
        equivariant_trivialization(&self.action, &bundle, y).map_err(|e| e.in_step("trivialization"))
    }

    /// `Φ_y^{-1}`, its `y`-partials and `π_X(y)`, shared by every point over `y`.
    fn fiber_data(&self, y: &[f64]) -> Result<FiberData> {
        let inv = |y: &[f64]| linalg::checked_inverse(&self.phi(y)?, 1e-10);
        let phi_inv = inv(y)?;
        let mut partials = Vec::with_capacity(y.len());
        let mut yp = y.to_vec();
        for l in 0..y.len() {
            yp[l] = y[l] + FRAME_FD_STEP;
            let plus = inv(&yp)?;
            yp[l] = y[l] - FRAME_FD_STEP;
            let minus = inv(&yp)?;
            yp[l] = y[l];
            partials.push((plus - minus) / (2.0 * FRAME_FD_STEP));
        }
        Ok(FiberData { phi_inv, partials, pi_x: self.td.frames_unchecked(y)?.pi_x })
    }

    /// `τ^{-1}(y, u) = (y, Φ_y^{-1} u)`.
    fn tau_inv(&self, fd: &FiberData, v: &[f64]) -> Vec<f64> {
        let m = self.transversal_dim();
        let f = &fd.phi_inv * DVector::from_column_slice(&v[m..]);
        let mut z = v[..m].to_vec();
        z.extend(f.iter());
        z
    }

    /// `ω̃ = (τ^{-1})^* σ̃_𝒳` at `v = (y, u)`.
    fn omega_tilde(&self, fd: &FiberData, v: &[f64]) -> Result<DMatrix<f64>> {
        let (m, n) = (self.transversal_dim(), self.dim());
        let z = self.tau_inv(fd, v);
        let sigma = sigma_tilde(&self.spray, &self.chart, &self.cc, &z, self.opts.disc)?;
        let mut j = DMatrix::zeros(n, n);
        j.view_mut((0, 0), (m, m)).fill_with_identity();
        j.view_mut((m, m), (n - m, n - m)).copy_from(&fd.phi_inv);
        let uv = DVector::from_column_slice(&v[m..]);
        for (l, d) in fd.partials.iter().enumerate() {
            j.view_mut((m, l), (n - m, 1)).copy_from(&(d * &uv));
        }
        Ok(j.transpose() * sigma * j)
    }

    /// The constant extension `p₁^* σ_{x₀}` on `(y, u)`.
    fn omega_bar(&self) -> DMatrix<f64> {
        let m = self.transversal_dim();
        let mut b = DMatrix::zeros(self.dim(), self.dim());
        b.view_mut((m, m), (self.sigma0.nrows(), self.sigma0.nrows())).copy_from(&self.sigma0);
        b
    }

    /// `Ψ(p, q, y)`.
    pub fn chart_map(&self, pqy: &[f64]) -> Result<Vec<f64>> {
        let (s2, m) = (self.symplectic_dim(), self.transversal_dim());
        if pqy.len() != s2 + m {
            return Err(Error::InvalidInput("split point has the wrong dimension".into()));
        }
        let (w, y) = pqy.split_at(s2);
        let mut v = y.to_vec();
        v.extend((&self.darboux * DVector::from_column_slice(w)).iter());
        let back = moser_point(self, 1.0, 0.0, &v, self.opts.moser_steps).map_err(|e| e.in_step("moser"))?;
        let z = self.tau_inv(&self.fiber_data(&back[..self.transversal_dim()])?, &back);
        let state = self.cc.to_ambient(&z)?;
        contravariant_exp(&self.spray, &self.chart, &state, self.opts.disc.steps).map_err(|e| e.in_step("exponential"))
    }

    /// `DΨ` by central differences.
    pub fn chart_jacobian(&self, pqy: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let mut j = DMatrix::zeros(n, n);
        let mut p = pqy.to_vec();
        for l in 0..n {
            p[l] = pqy[l] + FLOW_FD_STEP;
            let plus = self.chart_map(&p)?;
            p[l] = pqy[l] - FLOW_FD_STEP;
            let minus = self.chart_map(&p)?;
            p[l] = pqy[l];
            for i in 0..n {
                j[(i, l)] = (plus[i] - minus[i]) / (2.0 * FLOW_FD_STEP);
            }
        }
        Ok(j)
    }

    /// `Ψ^{-1} g Ψ = diag(D^{-1} ρ_{x₀}(g) D, K⁺ g K)` on `(p, q, y)`.
    pub fn conjugated(&self, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let bundle = ConormalBundle::new(&self.td)?;
        let (s2, m) = (self.symplectic_dim(), self.transversal_dim());
        let rho = bundle.rep(g, &bundle.base_point())?;
        let fiber = linalg::checked_inverse(&self.darboux, 1e-12)? * rho * &self.darboux;
        let (base, _) = induced_linear_action(&bundle.k, g);
        let mut l = DMatrix::zeros(s2 + m, s2 + m);
        l.view_mut((0, 0), (s2, s2)).copy_from(&fiber);
        l.view_mut((s2, s2), (m, m)).copy_from(&base);
        Ok(l)
    }

    /// Samples in `(p, q, y)`: `|(p, q)| ≤ radius`, `y` in `scale`× the parameter box.
    pub fn sample_plan(&self, count: usize, radius: f64, scale: f64, seed: u64) -> Vec<Vec<f64>> {
        let mut s = Sampler::new(seed);
        let h = self.opts.half_width * scale;
        (0..count)
            .map(|i| {
                let mut v = if i == 0 { vec![0.0; self.symplectic_dim()] } else { s.in_ball(self.symplectic_dim(), radius) };
                v.extend(if i == 0 { vec![0.0; self.transversal_dim()] } else { s.in_box(&vec![(-h, h); self.transversal_dim()]) });
                v
            })
            .collect()
    }

    /// Block structure of `Ψ^{-1}_* π` and linearity of the conjugated action at `samples`.
    pub fn verify(&self, samples: &[Vec<f64>]) -> CheckReport {
        let (s2, m) = (self.symplectic_dim(), self.transversal_dim());
        let canonical = -linalg::omega_std(s2 / 2);
        let tol = self.opts.tol;
        let per = par::map_indexed(samples, |i, v| {
            let mut r = CheckReport::new();
            r.limit("symplectic-block", tol);
            r.limit("cross-block", tol);
            r.limit("transversal-block", tol);
            r.limit("transversal-origin", tol);
            r.limit("group-conjugation", self.opts.tol_group);
            r.limit("block-diagonal", self.opts.tol_group);
            let run = |r: &mut CheckReport| -> Result<()> {
                let x = self.chart_map(v)?;
                let d = self.chart_jacobian(v)?;
                let dinv = linalg::checked_inverse(&d, 1e-10)?;
                let p = &dinv * self.td.pi().matrix(&x)? * dinv.transpose();
                let sym = p.view((0, 0), (s2, s2)).into_owned();
                r.push(i, v, "symplectic-block", linalg::max_abs(&(sym - &canonical)));
                r.push(i, v, "cross-block", linalg::max_abs(&p.view((0, s2), (s2, m)).into_owned()));
                let y = &v[s2..];
                let pi_x = self.td.frames_unchecked(y)?.pi_x;
                let yb = p.view((s2, s2), (m, m)).into_owned();
                r.push(i, v, "transversal-block", report::relative(linalg::max_abs(&(yb - &pi_x)), linalg::max_abs(&pi_x)));
                if i == 0 {
                    let origin = self.td.frames_unchecked(&vec![0.0; m])?.pi_x;
                    r.push(i, v, "transversal-origin", linalg::max_abs(&origin));
                }
                for (g, _) in self.action.elements() {
                    let l = self.conjugated(g)?;
                    let mut off = l.clone();
                    off.view_mut((0, 0), (s2, s2)).fill(0.0);
                    off.view_mut((s2, s2), (m, m)).fill(0.0);
                    r.push(i, v, "block-diagonal", linalg::max_abs(&off));
                    let lv = (&l * DVector::from_column_slice(v)).as_slice().to_vec();
                    let lhs = self.chart_map(&lv)?;
                    let rhs = self.action.act(g, &x);
                    r.push(i, v, "group-conjugation", lhs.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
                }
                Ok(())
            };
            if let Err(e) = run(&mut r) {
                r.fail(i, v, e);
            }
            r
        });
        let mut out = CheckReport::new();
        for r in per {
            out.merge(r, 0);
        }
        out
    }
}

struct FiberData {
    phi_inv: DMatrix<f64>,
    partials: Vec<DMatrix<f64>>,
    pi_x: DMatrix<f64>,
}

impl GaugeSource for Splitting {
    fn dim(&self) -> usize {
        self.td.n()
    }

    /// `y` in the enlarged parameter box and `|u|` within the enlarged fiber radius;
    /// the evaluation chart on `N*X` is larger still, so `Φ_y^{-1}` may stretch `u` a little.
    fn contains(&self, v: &[f64]) -> bool {
        let m = self.transversal_dim();
        v.len() == self.dim()
            && v[..m].iter().all(|y| y.abs() <= self.opts.half_width * EVAL_MARGIN)
            && linalg::norm(&v[m..]) <= self.opts.fiber_radius * EVAL_MARGIN
    }

    fn data(&self, v: &[f64], with_alpha: bool) -> Result<GaugeData> {
        let m = self.transversal_dim();
        let fd = self.fiber_data(&v[..m])?;
        let tilde = self.omega_tilde(&fd, v)?;
        let pi = local_model_from(&fd.pi_x, &tilde, v)?;
        let bar = self.omega_bar();
        let d_alpha = &bar - tilde;
        let alpha = if with_alpha {
            let delta = |w: &[f64]| Ok(&bar - self.omega_tilde(&fd, w)?);
            Some(primitive_unchecked(&delta, m, v)?)
        } else {
            None
        };
        Ok(GaugeData { pi, alpha, d_alpha })
    }
}
