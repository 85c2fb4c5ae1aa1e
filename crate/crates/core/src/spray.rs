//! Poisson sprays on the cotangent chart, their geodesic flow and the averaged
//! symplectic form `Ω_𝒳`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::field::{exterior_derivative_numeric, BivectorField, ChartBox};
use crate::linalg;
use crate::par;
use crate::quadrature::gauss_legendre;
use crate::report::{self, CheckReport};

/// `T*M` over a base box, with the fiber cap `|ξ| ≤ ρ_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct CotangentChart {
    base: Arc<ChartBox>,
    rho_max: f64,
}

impl CotangentChart {
    pub fn new(base: Arc<ChartBox>, rho_max: f64) -> Result<Self> {
        if !(rho_max > 0.0) || !rho_max.is_finite() {
            return Err(Error::InvalidInput(format!("fiber cap must be positive, got {rho_max}")));
        }
        Ok(CotangentChart { base, rho_max })
    }

    pub fn base(&self) -> &Arc<ChartBox> {
        &self.base
    }

    pub fn rho_max(&self) -> f64 {
        self.rho_max
    }

    pub fn dim(&self) -> usize {
        2 * self.base.dim()
    }

    /// `z = (x, ξ)` in the base box with `|ξ| ≤ ρ_max`.
    pub fn contains(&self, z: &[f64]) -> bool {
        let n = self.base.dim();
        z.len() == 2 * n
            && z.iter().all(|v| v.is_finite())
            && self.base.contains(&z[..n])
            && linalg::norm(&z[n..]) <= self.rho_max
    }
}

/// `𝒳(x, ξ) = (π(x) ξ, Q(ξ))` with `Q_k(ξ) = Σ Γ_k^{ab} ξ_a ξ_b`; `Q = 0` for the flat spray.
#[derive(Debug, Clone)]
pub struct SprayField {
    pi: BivectorField,
    /// `Γ[k][a][b]` flattened row-major, symmetric in `a, b`.
    gamma: Option<Vec<f64>>,
    sign: f64,
}

impl SprayField {
    /// The horizontal lift of `π♯` for the flat connection of the chart.
    pub fn flat(pi: BivectorField) -> Self {
        SprayField { pi, gamma: None, sign: 1.0 }
    }

    /// Flat spray plus a constant vertical quadratic term.
    pub fn with_quadratic(pi: BivectorField, gamma: Vec<f64>) -> Result<Self> {
        let n = pi.dim();
        if gamma.len() != n * n * n {
            return Err(Error::InvalidInput(format!(
                "vertical coefficients need {} entries, got {}",
                n * n * n,
                gamma.len()
            )));
        }
        let mut sym = gamma;
        for k in 0..n {
            for a in 0..n {
                for b in a + 1..n {
                    let (i, j) = (k * n * n + a * n + b, k * n * n + b * n + a);
                    let m = 0.5 * (sym[i] + sym[j]);
                    sym[i] = m;
                    sym[j] = m;
                }
            }
        }
        let gamma = if sym.iter().all(|&g| g == 0.0) { None } else { Some(sym) };
        Ok(SprayField { pi, gamma, sign: 1.0 })
    }

    pub fn pi(&self) -> &BivectorField {
        &self.pi
    }

    pub fn gamma(&self) -> Option<&[f64]> {
        self.gamma.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.pi.dim()
    }

    pub fn is_flat(&self) -> bool {
        self.gamma.is_none()
    }

    /// `−𝒳`, a spray for `−π`.
    pub fn negated(&self) -> Self {
        SprayField { pi: self.pi.clone(), gamma: self.gamma.clone(), sign: -self.sign }
    }

    /// The bivector this spray covers (`π`, or `−π` for a negated spray).
    pub fn bivector_at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.pi.matrix(x)? * self.sign)
    }

    /// `𝒳(x, ξ)` split into base and fiber components.
    pub fn eval(&self, x: &[f64], xi: &[f64]) -> Result<(DVector<f64>, DVector<f64>)> {
        let n = self.dim();
        if xi.len() != n {
            return Err(Error::InvalidInput("covector has wrong length".into()));
        }
        let base = self.pi.matrix(x)? * DVector::from_column_slice(xi) * self.sign;
        Ok((base, self.quadratic(xi)))
    }

    fn quadratic(&self, xi: &[f64]) -> DVector<f64> {
        let n = xi.len();
        let mut q = DVector::zeros(n);
        if let Some(g) = &self.gamma {
            for k in 0..n {
                let mut acc = 0.0;
                for a in 0..n {
                    for b in 0..n {
                        acc += g[k * n * n + a * n + b] * xi[a] * xi[b];
                    }
                }
                q[k] = self.sign * acc;
            }
        }
        q
    }

    fn rhs(&self, z: &[f64]) -> Result<DVector<f64>> {
        let n = self.dim();
        let (b, f) = self.eval(&z[..n], &z[n..])?;
        let mut out = DVector::zeros(2 * n);
        out.rows_mut(0, n).copy_from(&b);
        out.rows_mut(n, n).copy_from(&f);
        Ok(out)
    }

    fn rhs_with_jacobian(&self, z: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let n = self.dim();
        let (x, xi) = (&z[..n], &z[n..]);
        let (pi, partials) = self.pi.matrix_with_partials(x)?;
        let xiv = DVector::from_column_slice(xi);
        let mut f = DVector::zeros(2 * n);
        f.rows_mut(0, n).copy_from(&(&pi * &xiv * self.sign));
        f.rows_mut(n, n).copy_from(&self.quadratic(xi));
        let mut df = DMatrix::zeros(2 * n, 2 * n);
        for (l, p) in partials.iter().enumerate() {
            df.view_mut((0, l), (n, 1)).copy_from(&(p * &xiv * self.sign));
        }
        df.view_mut((0, n), (n, n)).copy_from(&(&pi * self.sign));
        if let Some(g) = &self.gamma {
            for k in 0..n {
                for a in 0..n {
                    let d: f64 = (0..n).map(|b| 2.0 * g[k * n * n + a * n + b] * xi[b]).sum();
                    df[(n + k, n + a)] = self.sign * d;
                }
            }
        }
        Ok((f, df))
    }
}

/// End state of a flow together with its Jacobian.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult {
    pub time: f64,
    pub state: Vec<f64>,
    /// `∂φ/∂z`, `2n×2n`; identity when the Jacobian was not requested.
    pub jacobian: DMatrix<f64>,
    pub steps: usize,
}

impl FlowResult {
    pub fn base(&self) -> &[f64] {
        &self.state[..self.state.len() / 2]
    }

    pub fn fiber(&self) -> &[f64] {
        &self.state[self.state.len() / 2..]
    }
}

struct Integrator<'a> {
    spray: &'a SprayField,
    chart: &'a CotangentChart,
    jacobian: bool,
}

impl Integrator<'_> {
    fn check(&self, z: &DVector<f64>, time: f64) -> Result<()> {
        if self.chart.contains(z.as_slice()) {
            Ok(())
        } else {
            Err(Error::DomainEscape { time, state: z.as_slice().to_vec() })
        }
    }

    fn stage(&self, z: &DVector<f64>, j: &DMatrix<f64>, time: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
        self.check(z, time)?;
        if self.jacobian {
            let (f, df) = self.spray.rhs_with_jacobian(z.as_slice())?;
            Ok((f, df * j))
        } else {
            Ok((self.spray.rhs(z.as_slice())?, DMatrix::zeros(0, 0)))
        }
    }

    /// Classical RK4 from `t0` to `t1` in `steps` equal steps.
    fn advance(&self, z: &mut DVector<f64>, j: &mut DMatrix<f64>, t0: f64, t1: f64, steps: usize) -> Result<()> {
        let h = (t1 - t0) / steps as f64;
        for s in 0..steps {
            let t = t0 + s as f64 * h;
            let (k1, m1) = self.stage(z, j, t)?;
            let z2 = &*z + &k1 * (0.5 * h);
            let j2 = if self.jacobian { &*j + &m1 * (0.5 * h) } else { m1.clone() };
            let (k2, m2) = self.stage(&z2, &j2, t + 0.5 * h)?;
            let z3 = &*z + &k2 * (0.5 * h);
            let j3 = if self.jacobian { &*j + &m2 * (0.5 * h) } else { m2.clone() };
            let (k3, m3) = self.stage(&z3, &j3, t + 0.5 * h)?;
            let z4 = &*z + &k3 * h;
            let j4 = if self.jacobian { &*j + &m3 * h } else { m3.clone() };
            let (k4, m4) = self.stage(&z4, &j4, t + h)?;
            *z += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
            if self.jacobian {
                *j += (m1 + (m2 + m3) * 2.0 + m4) * (h / 6.0);
            }
        }
        self.check(z, t1)
    }
}

fn state_check(chart: &CotangentChart, z: &[f64]) -> Result<()> {
    if z.len() != chart.dim() {
        return Err(Error::InvalidInput(format!(
            "state has length {} but the cotangent chart has dimension {}",
            z.len(),
            chart.dim()
        )));
    }
    if !chart.contains(z) {
        return Err(Error::DomainEscape { time: 0.0, state: z.to_vec() });
    }
    Ok(())
}

/// `φ^t(z)` by RK4 with fixed step `t/steps`, Jacobian by forward sensitivities.
pub fn geodesic_flow(
    spray: &SprayField,
    chart: &CotangentChart,
    z: &[f64],
    t: f64,
    steps: usize,
) -> Result<FlowResult> {
    flow_impl(spray, chart, z, t, steps, true)
}

fn flow_impl(
    spray: &SprayField,
    chart: &CotangentChart,
    z: &[f64],
    t: f64,
    steps: usize,
    jacobian: bool,
) -> Result<FlowResult> {
    state_check(chart, z)?;
    if steps == 0 {
        return Err(Error::InvalidInput("step count must be positive".into()));
    }
    let dim = z.len();
    let mut zv = DVector::from_column_slice(z);
    let mut j = DMatrix::identity(dim, dim);
    Integrator { spray, chart, jacobian }.advance(&mut zv, &mut j, 0.0, t, steps)?;
    Ok(FlowResult { time: t, state: zv.as_slice().to_vec(), jacobian: j, steps })
}

/// Flow states at increasing `times`, integrating each gap with
/// `max(1, ⌈steps_per_unit·Δt⌉)` steps.
pub fn flow_at_times(
    spray: &SprayField,
    chart: &CotangentChart,
    z: &[f64],
    times: &[f64],
    steps_per_unit: usize,
) -> Result<Vec<FlowResult>> {
    state_check(chart, z)?;
    if steps_per_unit == 0 {
        return Err(Error::InvalidInput("step count must be positive".into()));
    }
    let dim = z.len();
    let mut zv = DVector::from_column_slice(z);
    let mut j = DMatrix::identity(dim, dim);
    let integ = Integrator { spray, chart, jacobian: true };
    let mut out = Vec::with_capacity(times.len());
    let mut t_prev = 0.0;
    let mut total = 0;
    for &t in times {
        let dt = t - t_prev;
        if dt < 0.0 {
            return Err(Error::InvalidInput("flow times must be increasing".into()));
        }
        if dt > 0.0 {
            let steps = ((steps_per_unit as f64 * dt).ceil() as usize).max(1);
            integ.advance(&mut zv, &mut j, t_prev, t, steps)?;
            total += steps;
        }
        out.push(FlowResult { time: t, state: zv.as_slice().to_vec(), jacobian: j.clone(), steps: total });
        t_prev = t;
    }
    Ok(out)
}

/// Base point of the time-one flow.
pub fn contravariant_exp(spray: &SprayField, chart: &CotangentChart, z: &[f64], steps: usize) -> Result<Vec<f64>> {
    let r = flow_impl(spray, chart, z, 1.0, steps, false)?;
    Ok(r.base().to_vec())
}

/// Canonical form in `(x, ξ)` order: `[[0, −I], [I, 0]]`, i.e.
/// `ω_can((Y₁,η₁),(Y₂,η₂)) = η₁(Y₂) − η₂(Y₁)`.
pub fn omega_can(n: usize) -> DMatrix<f64> {
    -linalg::omega_std(n)
}

/// `ω_can` plus `π(η₁, η₂)` in the fiber block: `Ω_𝒳` along the zero section.
pub fn zero_section_form(pi: &DMatrix<f64>) -> DMatrix<f64> {
    let n = pi.nrows();
    let mut w = omega_can(n);
    w.view_mut((n, n), (n, n)).copy_from(pi);
    w
}

/// `Ω_𝒳(z)` together with the time-one flow from `z`.
#[derive(Debug, Clone)]
pub struct OmegaEval {
    pub omega: DMatrix<f64>,
    pub time_one: FlowResult,
}

/// `Ω_𝒳(z) = ∫₀¹ (φᵗ)*ω_can dt` by `quad`-node Gauss–Legendre.
pub fn omega_spray(spray: &SprayField, chart: &CotangentChart, z: &[f64], quad: usize, steps: usize) -> Result<DMatrix<f64>> {
    Ok(omega_with_flow(spray, chart, z, quad, steps)?.omega)
}

pub fn omega_with_flow(
    spray: &SprayField,
    chart: &CotangentChart,
    z: &[f64],
    quad: usize,
    steps: usize,
) -> Result<OmegaEval> {
    if quad == 0 {
        return Err(Error::InvalidInput("quadrature order must be positive".into()));
    }
    let n = spray.dim();
    let (nodes, weights) = gauss_legendre(quad);
    let mut times = nodes.clone();
    times.push(1.0);
    let flows = flow_at_times(spray, chart, z, &times, steps)?;
    let w = omega_can(n);
    let mut omega = DMatrix::zeros(2 * n, 2 * n);
    for (f, wk) in flows.iter().zip(&weights) {
        omega += f.jacobian.transpose() * &w * &f.jacobian * *wk;
    }
    let time_one = flows.into_iter().last().expect("time one was requested");
    Ok(OmegaEval { omega, time_one })
}

/// Tolerances and discretization for the realization checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealizationOptions {
    pub steps: usize,
    pub quad: usize,
    pub tol: f64,
    pub tol_closed: f64,
    pub fd_step: f64,
}

impl Default for RealizationOptions {
    fn default() -> Self {
        RealizationOptions { steps: 64, quad: 16, tol: 1e-5, tol_closed: 1e-4, fd_step: 1e-5 }
    }
}

/// Floor on `σ_min/σ_max` below which `Ω` counts as degenerate.
pub const OMEGA_RATIO_FLOOR: f64 = 1e-10;

fn invertible_omega(omega: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    linalg::checked_inverse(omega, OMEGA_RATIO_FLOOR)
}

fn finish(per_sample: Vec<CheckReport>, samples: &[Vec<f64>], n: usize) -> CheckReport {
    let mut out = CheckReport::new();
    let mut radii = Vec::with_capacity(samples.len());
    for (i, r) in per_sample.into_iter().enumerate() {
        radii.push((linalg::norm(&samples[i][n..]), r.failures.is_empty()));
        out.merge(r, 0);
    }
    out.probed_radius = Some(report::probe_radius(&radii));
    out
}

/// Checks that `p: (Σ, Ω_𝒳) → (M, π)` is a symplectic realization.
pub fn check_realization(
    spray: &SprayField,
    chart: &CotangentChart,
    samples: &[Vec<f64>],
    opts: &RealizationOptions,
) -> CheckReport {
    let n = spray.dim();
    let per = par::map_indexed(samples, |i, z| {
        let mut r = CheckReport::new();
        r.limit("antisymmetry", 1e-10);
        r.limit("closedness", opts.tol_closed);
        r.limit("pushforward", opts.tol);
        if let Err(e) = realization_sample(spray, chart, z, opts, i, &mut r) {
            r.fail(i, z, e);
        }
        r
    });
    finish(per, samples, n)
}

fn realization_sample(
    spray: &SprayField,
    chart: &CotangentChart,
    z: &[f64],
    opts: &RealizationOptions,
    i: usize,
    r: &mut CheckReport,
) -> Result<()> {
    let n = spray.dim();
    let omega = omega_spray(spray, chart, z, opts.quad, opts.steps)?;
    let scale = linalg::max_abs(&omega).max(1.0);
    r.push(i, z, "antisymmetry", linalg::antisymmetry_defect(&omega) / scale);
    let inv = invertible_omega(&omega)?;
    let d = exterior_derivative_numeric(
        |w| omega_spray(spray, chart, w, opts.quad, opts.steps),
        z,
        opts.fd_step,
        None,
    )?;
    r.push(i, z, "closedness", d.max_abs() / scale);
    let pi = spray.bivector_at(&z[..n])?;
    let push = inv.view((0, 0), (n, n)).into_owned();
    r.push(i, z, "pushforward", report::relative(linalg::max_abs(&(push - &pi)), linalg::max_abs(&pi)));
    Ok(())
}

/// Checks the self-dual pair `(M, π) ← (Σ, Ω_𝒳) → (M, −π)`.
pub fn check_self_dual_pair(
    spray: &SprayField,
    chart: &CotangentChart,
    samples: &[Vec<f64>],
    opts: &RealizationOptions,
) -> CheckReport {
    let n = spray.dim();
    let per = par::map_indexed(samples, |i, z| {
        let mut r = CheckReport::new();
        r.limit("exp-pushforward", opts.tol);
        r.limit("orthogonality", opts.tol);
        if let Err(e) = dual_pair_sample(spray, chart, z, opts, i, &mut r) {
            r.fail(i, z, e);
        }
        r
    });
    finish(per, samples, n)
}

fn dual_pair_sample(
    spray: &SprayField,
    chart: &CotangentChart,
    z: &[f64],
    opts: &RealizationOptions,
    i: usize,
    r: &mut CheckReport,
) -> Result<()> {
    let n = spray.dim();
    let ev = omega_with_flow(spray, chart, z, opts.quad, opts.steps)?;
    let inv = invertible_omega(&ev.omega)?;
    let dexp = ev.time_one.jacobian.rows(0, n).into_owned();
    let target = spray.bivector_at(ev.time_one.base())?;
    let push = &dexp * &inv * dexp.transpose();
    r.push(i, z, "exp-pushforward", report::relative(linalg::max_abs(&(push + &target)), linalg::max_abs(&target)));
    let kv = linalg::kernel_basis(&dexp);
    let mut vert = DMatrix::zeros(2 * n, n);
    vert.view_mut((n, 0), (n, n)).fill_with_identity();
    let pairing = vert.transpose() * &ev.omega * &kv;
    let onorm = linalg::singular_extremes(&ev.omega).1.max(f64::MIN_POSITIVE);
    r.push(i, z, "orthogonality", linalg::max_abs(&pairing) / onorm);
    Ok(())
}

/// `|Ω_𝒳(x, 0) − (ω_can + π-block)|∞` at a base point.
pub fn zero_section_residual(
    spray: &SprayField,
    chart: &CotangentChart,
    x: &[f64],
    quad: usize,
    steps: usize,
) -> Result<f64> {
    let n = spray.dim();
    let mut z = x.to_vec();
    z.extend(std::iter::repeat_n(0.0, n));
    let omega = omega_spray(spray, chart, &z, quad, steps)?;
    Ok(linalg::max_abs(&(omega - zero_section_form(&spray.bivector_at(x)?))))
}

/// `|(φ¹)*Ω_{−𝒳} − Ω_𝒳|∞` relative to `|Ω_𝒳|`.
pub fn pullback_consistency_residual(
    spray: &SprayField,
    chart: &CotangentChart,
    z: &[f64],
    quad: usize,
    steps: usize,
) -> Result<f64> {
    let ev = omega_with_flow(spray, chart, z, quad, steps)?;
    let back = omega_spray(&spray.negated(), chart, &ev.time_one.state, quad, steps)?;
    let j = &ev.time_one.jacobian;
    let pulled = j.transpose() * back * j;
    Ok(report::relative(linalg::max_abs(&(pulled - &ev.omega)), linalg::max_abs(&ev.omega)))
}
