use nalgebra::DMatrix;

use super::data::{Frames, TransversalData};
use crate::error::{Error, Result};
use crate::field::{dirac_gauge, ChartBox, dirac_pullback, dirac_to_bivector, DiracFrame};
use crate::linalg;
use crate::par;
use crate::report::{self, CheckReport};
use crate::spray::{contravariant_exp, omega_with_flow, CotangentChart, OmegaEval, SprayField};

/// Finite-difference step for `∂_y(N f)`.
pub const FRAME_FD_STEP: f64 = 1e-5;

/// Coordinates `(y, f)` on `N*X`, `(y, f) ↦ (χ(y), Σ f_a N_a(y))`.
#[derive(Debug, Clone)]
pub struct ConormalChart {
    td: TransversalData,
    params: ChartBox,
    fiber_radius: f64,
}

impl ConormalChart {
    pub fn transversal(&self) -> &TransversalData {
        &self.td
    }

    pub fn fiber_radius(&self) -> f64 {
        self.fiber_radius
    }

    /// Total dimension `k + (n − k) = n`.
    pub fn dim(&self) -> usize {
        self.td.n()
    }

    pub fn params(&self) -> &ChartBox {
        &self.params
    }

    /// The same chart with parameter box and fiber radius scaled by `factor`
    /// about their centers, so that stencils around boundary samples stay inside.
    pub fn enlarged(&self, factor: f64) -> ConormalChart {
        let bounds = self
            .params
            .bounds()
            .iter()
            .map(|&(lo, hi)| {
                let (c, h) = (0.5 * (lo + hi), 0.5 * (hi - lo) * factor);
                (c - h, c + h)
            })
            .collect::<Vec<_>>();
        let params = if bounds.is_empty() {
            self.params.clone()
        } else {
            ChartBox::new(self.params.name(), bounds).expect("scaled box stays valid")
        };
        ConormalChart { td: self.td.clone(), params, fiber_radius: self.fiber_radius * factor }
    }

    /// Pointwise transversal data at the base of `z`.
    pub fn frames_at(&self, z: &[f64]) -> Result<Frames> {
        self.check(z)?;
        let f = self.td.frames_unchecked(self.split(z).0)?;
        self.td.embedding().ambient().check(&f.x)?;
        Ok(f)
    }

    pub fn split<'z>(&self, z: &'z [f64]) -> (&'z [f64], &'z [f64]) {
        z.split_at(self.td.k())
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        if z.len() != self.dim() {
            return false;
        }
        let (y, f) = self.split(z);
        self.params.contains(y) && linalg::norm(f) <= self.fiber_radius
    }

    pub fn check(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "conormal point has length {} but the chart has dimension {}",
                z.len(),
                self.dim()
            )));
        }
        if !self.contains(z) {
            return Err(Error::OutOfDomain { chart: "conormal".into(), point: z.to_vec() });
        }
        Ok(())
    }

    /// The ambient cotangent state `(χ(y), N(y) f)`.
    pub fn to_ambient(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check(z)?;
        let (y, f) = self.split(z);
        let mut out = self.td.embedding().eval_unchecked(y)?;
        self.td.embedding().ambient().check(&out)?;
        let n = self.td.conormal_frame(y)?;
        out.extend((&n * nalgebra::DVector::from_column_slice(f)).iter());
        Ok(out)
    }

    /// Jacobian `[[dχ, 0], [∂_y(N f), N]]` of the inclusion, `2n × n`.
    pub fn inclusion_jacobian(&self, z: &[f64]) -> Result<DMatrix<f64>> {
        self.check(z)?;
        let (y, f) = self.split(z);
        let (n, k) = (self.td.n(), self.td.k());
        let fv = nalgebra::DVector::from_column_slice(f);
        let mut j = DMatrix::zeros(2 * n, n);
        j.view_mut((0, 0), (n, k)).copy_from(&self.td.embedding().jacobian_unchecked(y)?);
        j.view_mut((n, k), (n, n - k)).copy_from(&self.td.conormal_frame(y)?);
        let mut yp = y.to_vec();
        for l in 0..k {
            yp[l] = y[l] + FRAME_FD_STEP;
            let plus = self.td.conormal_frame(&yp)? * &fv;
            yp[l] = y[l] - FRAME_FD_STEP;
            let minus = self.td.conormal_frame(&yp)? * &fv;
            yp[l] = y[l];
            j.view_mut((n, l), (n, 1)).copy_from(&((plus - minus) / (2.0 * FRAME_FD_STEP)));
        }
        Ok(j)
    }
}

/// Builds the conormal chart and checks the frame and the inclusion rank at
/// the center and corners of the parameter box.
pub fn conormal_chart(td: &TransversalData, fiber_radius: f64) -> Result<ConormalChart> {
    if !(fiber_radius > 0.0) || !fiber_radius.is_finite() {
        return Err(Error::InvalidInput(format!("fiber radius must be positive, got {fiber_radius}")));
    }
    let cc = ConormalChart { td: td.clone(), params: (**td.embedding().params()).clone(), fiber_radius };
    let params = td.embedding().params();
    let k = params.dim();
    let mut probes = vec![params.center()];
    for mask in 0..(1usize << k.min(10)) {
        probes.push(
            params.bounds().iter().enumerate().map(|(i, &(lo, hi))| if mask >> i & 1 == 1 { hi } else { lo }).collect(),
        );
    }
    for y in &probes {
        td.frames(y)?;
        let mut z = y.clone();
        z.extend(std::iter::repeat_n(0.0, td.codim()));
        let j = cc.inclusion_jacobian(&z)?;
        if !(linalg::conditioning_ratio(&j) >= super::data::RANK_FLOOR) {
            return Err(Error::NotImmersion { param: y.clone() });
        }
    }
    Ok(cc)
}

/// Flow discretization for the spray-derived quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discretization {
    pub steps: usize,
    pub quad: usize,
}

impl Default for Discretization {
    fn default() -> Self {
        Discretization { steps: 64, quad: 16 }
    }
}

/// `σ̃_𝒳` at `z` with the flow and inclusion data it was built from.
#[derive(Debug, Clone)]
pub struct SigmaEval {
    pub sigma: DMatrix<f64>,
    pub omega: OmegaEval,
    pub inclusion: DMatrix<f64>,
}

pub fn sigma_tilde_eval(
    spray: &SprayField,
    chart: &CotangentChart,
    cc: &ConormalChart,
    z: &[f64],
    disc: Discretization,
) -> Result<SigmaEval> {
    let state = cc.to_ambient(z)?;
    let inclusion = cc.inclusion_jacobian(z)?;
    let omega = omega_with_flow(spray, chart, &state, disc.quad, disc.steps)?;
    let sigma = linalg::antisymmetrize(&(-(inclusion.transpose() * &omega.omega * &inclusion)));
    Ok(SigmaEval { sigma, omega, inclusion })
}

/// `σ̃_𝒳(z) = −Jᵀ Ω_𝒳 J` on the `(y, f)` chart.
pub fn sigma_tilde(
    spray: &SprayField,
    chart: &CotangentChart,
    cc: &ConormalChart,
    z: &[f64],
    disc: Discretization,
) -> Result<DMatrix<f64>> {
    Ok(sigma_tilde_eval(spray, chart, cc, z, disc)?.sigma)
}

/// `π(σ̃)(z)` from `π_X(y)` and the 2-form `σ̃(z)`: pull back the graph of
/// `π_X` along `(y, f) ↦ y`, gauge by `σ̃`, and read off the bivector.
pub fn local_model_from(pi_x: &DMatrix<f64>, sigma: &DMatrix<f64>, z: &[f64]) -> Result<DMatrix<f64>> {
    let k = pi_x.nrows();
    let n = z.len();
    if sigma.shape() != (n, n) {
        return Err(Error::InvalidInput("σ̃ has wrong shape".into()));
    }
    let base = DiracFrame::graph_of_matrix(z[..k].to_vec(), pi_x.clone());
    let mut dp = DMatrix::zeros(k, n);
    dp.view_mut((0, 0), (k, k)).fill_with_identity();
    let pulled = dirac_pullback(&base, &dp, z)?;
    dirac_to_bivector(&dirac_gauge(&pulled, sigma)?)
}

/// `π(σ̃)(z)` for a pointwise-evaluable `σ̃`.
pub fn local_model_bivector<F>(cc: &ConormalChart, sigma: F, z: &[f64]) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<DMatrix<f64>>,
{
    let pi_x = cc.frames_at(z)?.pi_x;
    local_model_from(&pi_x, &sigma(z)?, z)
}

fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let floor = super::data::RANK_FLOOR * sv.max().max(1.0);
    sv.iter().filter(|&&s| s > floor).count()
}

/// Options for [`verify_normal_form`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalFormOptions {
    pub disc: Discretization,
    pub tol: f64,
    pub tol_identity: f64,
}

impl Default for NormalFormOptions {
    fn default() -> Self {
        NormalFormOptions { disc: Discretization::default(), tol: 1e-4, tol_identity: 1e-10 }
    }
}

/// Checks that `exp_𝒳: (N*X, π(σ̃_𝒳)) → (M, π)` is Poisson at `samples`.
pub fn verify_normal_form(
    spray: &SprayField,
    chart: &CotangentChart,
    cc: &ConormalChart,
    samples: &[Vec<f64>],
    opts: &NormalFormOptions,
) -> CheckReport {
    let per = par::map_indexed(samples, |i, z| {
        let mut r = CheckReport::new();
        r.limit("normal-form", opts.tol);
        r.limit("identity-on-X", opts.tol_identity);
        r.limit("leaf-rank", 0.5);
        if let Err(e) = normal_form_sample(spray, chart, cc, z, opts, i, &mut r) {
            r.fail(i, z, e);
        }
        r
    });
    let mut out = CheckReport::new();
    let mut radii = Vec::with_capacity(samples.len());
    for (i, r) in per.into_iter().enumerate() {
        let f = &samples[i][cc.td.k().min(samples[i].len())..];
        radii.push((linalg::norm(f), r.failures.is_empty()));
        out.merge(r, 0);
    }
    out.probed_radius = Some(report::probe_radius(&radii));
    out
}

fn normal_form_sample(
    spray: &SprayField,
    chart: &CotangentChart,
    cc: &ConormalChart,
    z: &[f64],
    opts: &NormalFormOptions,
    i: usize,
    r: &mut CheckReport,
) -> Result<()> {
    let n = cc.dim();
    let frames = cc.frames_at(z)?;
    let ev = sigma_tilde_eval(spray, chart, cc, z, opts.disc)?;
    let model = local_model_from(&frames.pi_x, &ev.sigma, z)?;
    let a = ev.omega.time_one.jacobian.rows(0, n) * &ev.inclusion;
    let target = spray.bivector_at(ev.omega.time_one.base())?;
    let push = &a * &model * a.transpose();
    r.push(i, z, "normal-form", report::relative(linalg::max_abs(&(push - &target)), linalg::max_abs(&target)));

    let mut zero = frames.x.clone();
    zero.extend(std::iter::repeat_n(0.0, n));
    let back = contravariant_exp(spray, chart, &zero, opts.disc.steps)?;
    let id = back.iter().zip(&frames.x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    r.push(i, z, "identity-on-X", id);

    let expected = numerical_rank(&frames.pi_x) + cc.td.codim();
    r.push(i, z, "leaf-rank", (numerical_rank(&model) as f64 - expected as f64).abs());
    Ok(())
}
