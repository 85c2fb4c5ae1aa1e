//! Gauge paths `π_t = π^{t dα}`, the Moser field and its flow, relative
//! primitives vanishing along the zero section, and extension independence.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::field::{gauge_matrix, BivectorField, OneFormField};
use crate::linalg;
use crate::par;
use crate::quadrature::gauss_legendre;
use crate::report::{self, CheckReport};
use crate::transversal::{local_model_from, ConormalChart};

/// Central-difference step for Moser-flow Jacobians.
pub const FLOW_FD_STEP: f64 = 1e-5;

/// Pointwise data of an affine gauge path: `π`, `α` and `dα` at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeData {
    pub pi: DMatrix<f64>,
    /// Only filled when requested.
    pub alpha: Option<DVector<f64>>,
    pub d_alpha: DMatrix<f64>,
}

/// Anything that yields `π`, `α`, `dα` pointwise on a chart.
pub trait GaugeSource: Sync {
    fn dim(&self) -> usize;
    fn contains(&self, x: &[f64]) -> bool;
    fn data(&self, x: &[f64], with_alpha: bool) -> Result<GaugeData>;
}

/// `t ↦ π^{t dα}` for expression fields, `dα` by exact jets.
#[derive(Debug, Clone)]
pub struct GaugePath {
    pi: BivectorField,
    alpha: OneFormField,
}

impl GaugePath {
    pub fn new(pi: BivectorField, alpha: OneFormField) -> Result<Self> {
        if pi.dim() != alpha.dim() {
            return Err(Error::InvalidInput("bivector and 1-form dimensions differ".into()));
        }
        Ok(GaugePath { pi, alpha })
    }

    pub fn pi(&self) -> &BivectorField {
        &self.pi
    }

    pub fn alpha(&self) -> &OneFormField {
        &self.alpha
    }
}

impl GaugeSource for GaugePath {
    fn dim(&self) -> usize {
        self.pi.dim()
    }

    fn contains(&self, x: &[f64]) -> bool {
        self.pi.chart().contains(x)
    }

    fn data(&self, x: &[f64], with_alpha: bool) -> Result<GaugeData> {
        let alpha = if with_alpha { Some(self.alpha.value(x)?) } else { None };
        Ok(GaugeData { pi: self.pi.matrix(x)?, alpha, d_alpha: self.alpha.exterior_derivative(x)? })
    }
}

fn check_point<S: GaugeSource + ?Sized>(src: &S, x: &[f64]) -> Result<()> {
    if x.len() != src.dim() {
        return Err(Error::InvalidInput(format!("point has length {} but the path has dimension {}", x.len(), src.dim())));
    }
    if !src.contains(x) {
        return Err(Error::OutOfDomain { chart: "gauge path".into(), point: x.to_vec() });
    }
    Ok(())
}

/// `π_t(x) = π(x)(I + t dα(x) π(x))^{-1}`.
pub fn gauge_path_eval<S: GaugeSource + ?Sized>(src: &S, t: f64, x: &[f64]) -> Result<DMatrix<f64>> {
    check_point(src, x)?;
    let d = src.data(x, false)?;
    if t == 0.0 {
        return Ok(d.pi);
    }
    gauge_matrix(&d.pi, &(&d.d_alpha * t), t, x)
}

/// The Moser field `V_t(x) = π_t(x) α(x)`.
///
/// With `π♯ξ = πξ` and `ι_V ω = ωᵀV` this is the field with
/// `L_V ω_t + dα = 0` on symplectic leaves; see the decisions ledger for the sign.
pub fn moser_vector<S: GaugeSource + ?Sized>(src: &S, t: f64, x: &[f64]) -> Result<DVector<f64>> {
    check_point(src, x)?;
    let d = src.data(x, true)?;
    let alpha = d.alpha.expect("requested");
    let pt = if t == 0.0 { d.pi } else { gauge_matrix(&d.pi, &(&d.d_alpha * t), t, x)? };
    Ok(pt * alpha)
}

/// End point and Jacobian of `φ^{t,s}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MoserResult {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub jacobian: DMatrix<f64>,
}

fn escape(time: f64, x: &DVector<f64>) -> Error {
    Error::DomainEscape { time, state: x.as_slice().to_vec() }
}

fn stage<S: GaugeSource + ?Sized>(src: &S, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
    if !src.contains(x.as_slice()) {
        return Err(escape(t, x));
    }
    moser_vector(src, t, x.as_slice())
}

/// RK4 for the nonautonomous `V_t` from `s` to `t`, sampling `V` at stage times.
pub fn moser_point<S: GaugeSource + ?Sized>(src: &S, s: f64, t: f64, x: &[f64], steps: usize) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(Error::InvalidInput("step count must be positive".into()));
    }
    check_point(src, x)?;
    let h = (t - s) / steps as f64;
    let mut z = DVector::from_column_slice(x);
    for i in 0..steps {
        let tau = s + i as f64 * h;
        let k1 = stage(src, tau, &z)?;
        let k2 = stage(src, tau + 0.5 * h, &(&z + &k1 * (0.5 * h)))?;
        let k3 = stage(src, tau + 0.5 * h, &(&z + &k2 * (0.5 * h)))?;
        let k4 = stage(src, tau + h, &(&z + &k3 * h))?;
        z += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
    }
    if !src.contains(z.as_slice()) {
        return Err(escape(t, &z));
    }
    Ok(z.as_slice().to_vec())
}

/// `φ^{t,s}(x)` with its Jacobian by central differences of whole trajectories.
pub fn moser_flow<S: GaugeSource + ?Sized>(src: &S, s: f64, t: f64, x: &[f64], steps: usize) -> Result<MoserResult> {
    let end = moser_point(src, s, t, x, steps)?;
    let n = x.len();
    let mut jacobian = DMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    for l in 0..n {
        xp[l] = x[l] + FLOW_FD_STEP;
        let plus = moser_point(src, s, t, &xp, steps)?;
        xp[l] = x[l] - FLOW_FD_STEP;
        let minus = moser_point(src, s, t, &xp, steps)?;
        xp[l] = x[l];
        for i in 0..n {
            jacobian[(i, l)] = (plus[i] - minus[i]) / (2.0 * FLOW_FD_STEP);
        }
    }
    Ok(MoserResult { start: x.to_vec(), end, jacobian })
}

/// Relative defect of `dφ π_s dφᵀ = π_t ∘ φ` for a computed flow.
pub fn stabilization_residual<S: GaugeSource + ?Sized>(src: &S, s: f64, t: f64, flow: &MoserResult) -> Result<f64> {
    let ps = gauge_path_eval(src, s, &flow.start)?;
    let pt = gauge_path_eval(src, t, &flow.end)?;
    let push = &flow.jacobian * ps * flow.jacobian.transpose();
    Ok(report::relative(linalg::max_abs(&(push - &pt)), linalg::max_abs(&pt)))
}

/// `|φ^{t,u}(φ^{u,s}(x)) − φ^{t,s}(x)|∞`.
pub fn cocycle_residual<S: GaugeSource + ?Sized>(
    src: &S,
    (s, u, t): (f64, f64, f64),
    x: &[f64],
    steps: usize,
) -> Result<f64> {
    let mid = moser_point(src, s, u, x, steps)?;
    let two = moser_point(src, u, t, &mid, steps)?;
    let one = moser_point(src, s, t, x, steps)?;
    Ok(two.iter().zip(&one).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

/// Options for [`verify_moser`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoserOptions {
    pub steps: usize,
    pub tol: f64,
    pub tol_cocycle: f64,
}

impl Default for MoserOptions {
    fn default() -> Self {
        MoserOptions { steps: 64, tol: 1e-5, tol_cocycle: 1e-7 }
    }
}

/// Stabilization on `(s,t) ∈ {(0,½), (0,1), (½,1)}` and the cocycle
/// `φ^{1,½} ∘ φ^{½,0} = φ^{1,0}` at every sample.
pub fn verify_moser<S: GaugeSource + ?Sized>(src: &S, samples: &[Vec<f64>], opts: &MoserOptions) -> CheckReport {
    let per = par::map_indexed(samples, |i, x| {
        let mut r = CheckReport::new();
        r.limit("stabilization", opts.tol);
        r.limit("cocycle", opts.tol_cocycle);
        let run = |r: &mut CheckReport| -> Result<()> {
            for (s, t) in [(0.0, 0.5), (0.0, 1.0), (0.5, 1.0)] {
                let flow = moser_flow(src, s, t, x, opts.steps)?;
                r.push(i, x, "stabilization", stabilization_residual(src, s, t, &flow)?);
            }
            r.push(i, x, "cocycle", cocycle_residual(src, (0.0, 0.5, 1.0), x, opts.steps)?);
            Ok(())
        };
        if let Err(e) = run(&mut r) {
            r.fail(i, x, e);
        }
        r
    });
    let mut out = CheckReport::new();
    for r in per {
        out.merge(r, 0);
    }
    out
}

/// Gauss–Legendre order of the homotopy integral.
pub const PRIMITIVE_NODES: usize = 16;
/// Bound on `|Δ(y, 0)|` for the relative-primitive precondition.
pub const VANISHING_TOL: f64 = 1e-8;

/// `η(z) = ∫₀¹ ι_E Δ|_{(y, s f)} ∘ dm_s ds` with `E = (0, f)` and
/// `m_s(y, f) = (y, s f)`, without checking that `Δ` vanishes at `f = 0`.
pub fn primitive_unchecked<D>(delta: &D, k: usize, z: &[f64]) -> Result<DVector<f64>>
where
    D: Fn(&[f64]) -> Result<DMatrix<f64>> + ?Sized,
{
    let n = z.len();
    if k > n {
        return Err(Error::InvalidInput("base dimension exceeds total dimension".into()));
    }
    let mut eta = DVector::zeros(n);
    if z[k..].iter().all(|&v| v == 0.0) {
        return Ok(eta);
    }
    let (nodes, weights) = gauss_legendre(PRIMITIVE_NODES);
    let mut e = DVector::zeros(n);
    e.rows_mut(k, n - k).copy_from_slice(&z[k..]);
    let mut zs = z.to_vec();
    for (&s, &w) in nodes.iter().zip(&weights) {
        for a in k..n {
            zs[a] = s * z[a];
        }
        let d = delta(&zs)?;
        if d.shape() != (n, n) {
            return Err(Error::InvalidInput("difference form has wrong shape".into()));
        }
        let contracted = d.transpose() * &e;
        for j in 0..n {
            eta[j] += w * contracted[j] * if j < k { 1.0 } else { s };
        }
    }
    Ok(eta)
}

/// Relative primitive of a closed `Δ` vanishing on `TE|_X`, checked at `(y, 0)`.
pub fn relative_primitive<D>(delta: &D, k: usize, z: &[f64]) -> Result<DVector<f64>>
where
    D: Fn(&[f64]) -> Result<DMatrix<f64>> + ?Sized,
{
    let mut z0 = z.to_vec();
    z0[k.min(z.len())..].iter_mut().for_each(|v| *v = 0.0);
    let residual = linalg::max_abs(&delta(&z0)?);
    if !(residual <= VANISHING_TOL) {
        return Err(Error::NotVanishingOnX { residual });
    }
    primitive_unchecked(delta, k, z)
}

/// Residuals of a computed primitive at `z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrimitiveCheck {
    /// `|dη − Δ|∞` at `z`, by central differences.
    pub exactness: f64,
    /// `|η(y, 0)|∞`.
    pub zero_value: f64,
    /// `|∂η(y, 0)|∞`, by central differences.
    pub zero_jet: f64,
}

fn fd_jacobian<F>(f: F, x: &[f64], h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<DVector<f64>>,
{
    let n = x.len();
    let mut jac: Option<DMatrix<f64>> = None;
    let mut xp = x.to_vec();
    for l in 0..n {
        xp[l] = x[l] + h;
        let plus = f(&xp)?;
        xp[l] = x[l] - h;
        let minus = f(&xp)?;
        xp[l] = x[l];
        let j = jac.get_or_insert_with(|| DMatrix::zeros(plus.len(), n));
        j.column_mut(l).copy_from(&((plus - minus) / (2.0 * h)));
    }
    Ok(jac.unwrap_or_else(|| DMatrix::zeros(0, 0)))
}

pub fn check_primitive<D>(delta: &D, k: usize, z: &[f64], h: f64) -> Result<PrimitiveCheck>
where
    D: Fn(&[f64]) -> Result<DMatrix<f64>> + ?Sized,
{
    let eta = |w: &[f64]| primitive_unchecked(delta, k, w);
    // J[j][i] = ∂_i η_j, so (dη)_{ij} = J[j][i] − J[i][j]
    let j = fd_jacobian(eta, z, h)?;
    let d_eta = j.transpose() - &j;
    let exactness = linalg::max_abs(&(d_eta - delta(z)?));
    let mut z0 = z.to_vec();
    z0[k..].iter_mut().for_each(|v| *v = 0.0);
    let zero_value = eta(&z0)?.amax();
    let zero_jet = linalg::max_abs(&fd_jacobian(eta, &z0, h)?);
    Ok(PrimitiveCheck { exactness, zero_value, zero_jet })
}

/// The extension of `σ = −w_X` that is constant along the fibers:
/// `d(½ fᵀ σ(y) df)`, with `∂_y σ` by central differences.
pub fn canonical_extension(cc: &ConormalChart, z: &[f64]) -> Result<DMatrix<f64>> {
    cc.check(z)?;
    let td = cc.transversal();
    let (k, n) = (td.k(), td.n());
    let (y, f) = cc.split(z);
    let sigma = |y: &[f64]| -> Result<DMatrix<f64>> { Ok(-td.frames_unchecked(y)?.w_x) };
    let fv = DVector::from_column_slice(f);
    let mut out = DMatrix::zeros(n, n);
    out.view_mut((k, k), (n - k, n - k)).copy_from(&sigma(y)?);
    let h = crate::transversal::model::FRAME_FD_STEP;
    let mut yp = y.to_vec();
    for i in 0..k {
        yp[i] = y[i] + h;
        let plus = sigma(&yp)?;
        yp[i] = y[i] - h;
        let minus = sigma(&yp)?;
        yp[i] = y[i];
        // (y_i, f_b) entry: ½ Σ_a f_a ∂_i σ_ab
        let row = (plus - minus).transpose() * &fv / (4.0 * h);
        for b in 0..n - k {
            out[(i, k + b)] = row[b];
            out[(k + b, i)] = -row[b];
        }
    }
    Ok(out)
}

/// Enlargement of the conormal chart used for flow stencils near boundary samples.
pub const EVAL_MARGIN: f64 = 1.25;

/// The path `π_t = π(σ̃_A)^{t Δ}`, `Δ = σ̃_B − σ̃_A = dη`, with `η` the relative primitive.
pub struct ExtensionPath<A, B> {
    cc: ConormalChart,
    sigma_a: A,
    sigma_b: B,
}

impl<A, B> ExtensionPath<A, B>
where
    A: Fn(&ConormalChart, &[f64]) -> Result<DMatrix<f64>> + Sync,
    B: Fn(&ConormalChart, &[f64]) -> Result<DMatrix<f64>> + Sync,
{
    /// Works on `cc.enlarged(EVAL_MARGIN)`; the closures receive that chart.
    pub fn new(cc: &ConormalChart, sigma_a: A, sigma_b: B) -> Self {
        ExtensionPath { cc: cc.enlarged(EVAL_MARGIN), sigma_a, sigma_b }
    }

    pub fn chart(&self) -> &ConormalChart {
        &self.cc
    }

    pub fn difference(&self, z: &[f64]) -> Result<DMatrix<f64>> {
        Ok((self.sigma_b)(&self.cc, z)? - (self.sigma_a)(&self.cc, z)?)
    }

    /// `π(σ̃_B)(z)`, the end of the path.
    pub fn target(&self, z: &[f64]) -> Result<DMatrix<f64>> {
        let pi_x = self.cc.frames_at(z)?.pi_x;
        local_model_from(&pi_x, &(self.sigma_b)(&self.cc, z)?, z)
    }
}

impl<A, B> GaugeSource for ExtensionPath<A, B>
where
    A: Fn(&ConormalChart, &[f64]) -> Result<DMatrix<f64>> + Sync,
    B: Fn(&ConormalChart, &[f64]) -> Result<DMatrix<f64>> + Sync,
{
    fn dim(&self) -> usize {
        self.cc.dim()
    }

    fn contains(&self, z: &[f64]) -> bool {
        self.cc.contains(z)
    }

    fn data(&self, z: &[f64], with_alpha: bool) -> Result<GaugeData> {
        let pi_x = self.cc.frames_at(z)?.pi_x;
        let sa = (self.sigma_a)(&self.cc, z)?;
        let d_alpha = (self.sigma_b)(&self.cc, z)? - &sa;
        let pi = local_model_from(&pi_x, &sa, z)?;
        let alpha = if with_alpha {
            Some(primitive_unchecked(&|w: &[f64]| self.difference(w), self.cc.transversal().k(), z)?)
        } else {
            None
        };
        Ok(GaugeData { pi, alpha, d_alpha })
    }
}

/// Options for [`verify_extension_independence`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtensionOptions {
    pub steps: usize,
    pub tol: f64,
    pub tol_match: f64,
    pub tol_fix: f64,
    pub tol_identity: f64,
}

impl Default for ExtensionOptions {
    fn default() -> Self {
        ExtensionOptions { steps: 8, tol: 1e-4, tol_match: 1e-8, tol_fix: 1e-8, tol_identity: 1e-6 }
    }
}

/// Moser flow from `π(σ̃_A)` to `π(σ̃_B)`: pushforward at every sample, and
/// at zero-section samples the fixed point and identity differential.
pub fn verify_extension_independence<A, B>(
    cc: &ConormalChart,
    sigma_a: A,
    sigma_b: B,
    samples: &[Vec<f64>],
    opts: &ExtensionOptions,
) -> CheckReport
where
    A: Fn(&ConormalChart, &[f64]) -> Result<DMatrix<f64>> + Sync,
    B: Fn(&ConormalChart, &[f64]) -> Result<DMatrix<f64>> + Sync,
{
    let path = ExtensionPath::new(cc, sigma_a, sigma_b);
    let k = cc.transversal().k();
    let per = par::map_indexed(samples, |i, z| {
        let mut r = CheckReport::new();
        r.limit("restriction-match", opts.tol_match);
        r.limit("pushforward", opts.tol);
        r.limit("fixes-X", opts.tol_fix);
        r.limit("identity-differential", opts.tol_identity);
        let run = |r: &mut CheckReport| -> Result<()> {
            cc.check(z)?;
            let mut z0 = z.clone();
            z0[k..].iter_mut().for_each(|v| *v = 0.0);
            let gap = linalg::max_abs(&path.difference(&z0)?);
            r.push(i, z, "restriction-match", gap);
            if !(gap <= opts.tol_match) {
                return Err(Error::NotVanishingOnX { residual: gap });
            }
            let flow = moser_flow(&path, 0.0, 1.0, z, opts.steps)?;
            let start = gauge_path_eval(&path, 0.0, z)?;
            let target = path.target(&flow.end)?;
            let push = &flow.jacobian * start * flow.jacobian.transpose();
            r.push(i, z, "pushforward", report::relative(linalg::max_abs(&(push - &target)), linalg::max_abs(&target)));
            if z[k..].iter().all(|&v| v == 0.0) {
                let moved = flow.end.iter().zip(z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                r.push(i, z, "fixes-X", moved);
                let n = z.len();
                r.push(i, z, "identity-differential", linalg::max_abs(&(&flow.jacobian - DMatrix::identity(n, n))));
            }
            Ok(())
        };
        if let Err(e) = run(&mut r) {
            r.fail(i, z, e);
        }
        r
    });
    let mut out = CheckReport::new();
    for r in per {
        out.merge(r, 0);
    }
    out
}
