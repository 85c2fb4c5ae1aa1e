//! Command dispatch: each command runs one verification suite family and
//! collects its records into a [`Report`].

use std::str::FromStr;
use std::time::Instant;

use pnf_core::equivariant::{b_map_trials, weinstein_split, SplitOptions};
use pnf_core::field::jacobiator;
use pnf_core::moser::{canonical_extension, verify_extension_independence, verify_moser, ExtensionOptions, GaugePath, MoserOptions};
use pnf_core::par::map_indexed;
use pnf_core::report::CheckReport;
use pnf_core::sampling::Sampler;
use pnf_core::spray::{
    check_realization, check_self_dual_pair, zero_section_residual, CotangentChart, RealizationOptions, SprayField,
};
use pnf_core::transversal::{conormal_chart, sigma_tilde, verify_normal_form, ConormalChart, Discretization, NormalFormOptions};

use crate::config::{ConfigError, MoserSpec, RunConfig};
use crate::report::{Comparison, Record, Report};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    CheckJacobi,
    Realize,
    DualPair,
    NormalForm,
    Moser,
    Split,
}

impl Command {
    pub const ALL: [Command; 6] =
        [Command::CheckJacobi, Command::Realize, Command::DualPair, Command::NormalForm, Command::Moser, Command::Split];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::CheckJacobi => "check-jacobi",
            Command::Realize => "realize",
            Command::DualPair => "dual-pair",
            Command::NormalForm => "normal-form",
            Command::Moser => "moser",
            Command::Split => "split",
        }
    }

    /// Records that `--tol` overrides.
    pub fn primary_records(self) -> &'static [&'static str] {
        match self {
            Command::CheckJacobi => &["jacobiator"],
            Command::Realize => &["pushforward"],
            Command::DualPair => &["exp-pushforward"],
            Command::NormalForm => &["normal-form"],
            Command::Moser => &["stabilization", "extension-pushforward"],
            Command::Split => &["symplectic-block", "cross-block", "transversal-block"],
        }
    }

    /// Applies `--steps`/`--quad` to the discretization this command uses.
    pub fn apply_discretization(self, cfg: &mut RunConfig, steps: Option<usize>, quad: Option<usize>) {
        match self {
            Command::Moser => {
                let m = cfg.moser.get_or_insert_with(MoserSpec::default);
                if let Some(s) = steps {
                    m.steps = s;
                }
                if let Some(q) = quad {
                    m.sigma_quad = q;
                }
            }
            Command::Split => {
                if let Some(s) = steps {
                    cfg.split.steps = s;
                }
                if let Some(q) = quad {
                    cfg.split.quad = q;
                }
            }
            _ => {
                if let Some(s) = steps {
                    cfg.flow.steps = s;
                }
                if let Some(q) = quad {
                    cfg.flow.quad = q;
                }
            }
        }
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Command::ALL.into_iter().find(|c| c.as_str() == s).ok_or_else(|| format!("unknown command `{s}`"))
    }
}

impl std::fmt::Display for Command {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn same(kind: &str) -> String {
    kind.to_string()
}

fn sampler(cfg: &RunConfig) -> Sampler {
    Sampler::new(cfg.samples.seed.unwrap_or(0))
}

/// Base points in the `base_radius` ball around the chart center.
fn base_points(cfg: &RunConfig, s: &mut Sampler, count: usize) -> Vec<Vec<f64>> {
    let center: Vec<f64> = cfg.manifold.bounds.iter().map(|b| 0.5 * (b[0] + b[1])).collect();
    (0..count)
        .map(|_| s.in_ball(center.len(), cfg.samples.base_radius).iter().zip(&center).map(|(d, c)| c + d).collect())
        .collect()
}

/// Cotangent states `(x, ξ)` with `|ξ| ≤ fiber_radius`.
fn cotangent_points(cfg: &RunConfig, s: &mut Sampler) -> Vec<Vec<f64>> {
    let n = cfg.manifold.dim;
    base_points(cfg, s, cfg.samples.count)
        .into_iter()
        .map(|mut x| {
            x.extend(s.in_ball(n, cfg.samples.fiber_radius));
            x
        })
        .collect()
}

/// `(y, f)` with `y` in the parameter box; every `zero_every`-th sample on
/// the zero section and the next one on the fiber sphere.
fn conormal_points(cc: &ConormalChart, s: &mut Sampler, count: usize, zero_every: usize) -> Vec<Vec<f64>> {
    let c = cc.transversal().codim();
    let r = cc.fiber_radius();
    let bounds = cc.params().bounds().to_vec();
    (0..count)
        .map(|i| {
            let mut z = s.in_box(&bounds);
            match i % zero_every {
                0 => z.extend(vec![0.0; c]),
                1 if zero_every > 2 => z.extend(s.on_sphere(c, r)),
                _ => z.extend(s.in_ball(c, r)),
            }
            z
        })
        .collect()
}

const FRAME_NOTE: &str =
    "conormal frame: projection of a fixed reference coframe, Gram-Schmidt in column order (one valid choice among many)";

fn setup_error(report: &mut Report, suite: &str, e: pnf_core::Error) {
    report.push(Record::error(suite, "setup", e.to_string()));
}

/// Ratio of the worst `kind` residual at the coarse and fine step counts.
fn refinement<F>(report: &mut Report, suite: &str, cfg: &RunConfig, kind: &str, run: F)
where
    F: Fn(usize) -> CheckReport,
{
    let Some([coarse, fine]) = cfg.flow.refine else {
        return;
    };
    let (a, b) = (run(coarse), run(fine));
    let failures: Vec<String> = a.failures.iter().chain(&b.failures).map(|f| format!("sample {}: {}", f.sample, f.error)).collect();
    let ratio = if failures.is_empty() { a.max(kind) / b.max(kind) } else { f64::NAN };
    let samples = a.residuals.iter().filter(|r| r.kind == kind).count();
    let mut rec = Record::new(suite, "refinement", ratio, cfg.tolerance("refinement"), Comparison::AtLeast, samples);
    rec.errors = failures;
    report.push(rec);
}

/// Runs `cmd` on a validated config. Numerical failures become failing
/// records; only config problems are returned as errors.
pub fn run_command(cmd: Command, cfg: &RunConfig) -> Result<Report, ConfigError> {
    let start = Instant::now();
    let mut report = Report::new(cmd.as_str(), cfg);
    match cmd {
        Command::CheckJacobi => check_jacobi(cfg, &mut report)?,
        Command::Realize => realize(cfg, &mut report)?,
        Command::DualPair => dual_pair(cfg, &mut report)?,
        Command::NormalForm => normal_form(cfg, &mut report)?,
        Command::Moser => moser(cfg, &mut report)?,
        Command::Split => split(cfg, &mut report)?,
    }
    report.timing.wall_clock_s = start.elapsed().as_secs_f64();
    Ok(report)
}

fn check_jacobi(cfg: &RunConfig, report: &mut Report) -> Result<(), ConfigError> {
    let pi = cfg.bivector()?;
    let mut s = sampler(cfg);
    let bounds: Vec<(f64, f64)> = cfg.manifold.bounds.iter().map(|b| (b[0], b[1])).collect();
    let points: Vec<Vec<f64>> = (0..cfg.samples.count).map(|_| s.in_box(&bounds)).collect();
    let values = map_indexed(&points, |_, x| jacobiator(&pi, x).map(|j| j.max_abs()));
    let mut cr = CheckReport::new();
    cr.limit("jacobiator", cfg.tolerance("jacobiator"));
    for (i, v) in values.into_iter().enumerate() {
        match v {
            Ok(v) => cr.push(i, &points[i], "jacobiator", v),
            Err(e) => cr.fail(i, &points[i], e),
        }
    }
    report.absorb("jacobi", &cr, cfg, same, "");
    Ok(())
}

fn spray_setup(cfg: &RunConfig) -> Result<pnf_core::Result<(SprayField, CotangentChart)>, ConfigError> {
    let pi = cfg.bivector()?;
    Ok(CotangentChart::new(pi.chart().clone(), cfg.flow.rho_max).map(|c| (SprayField::flat(pi), c)))
}

fn realization_options(cfg: &RunConfig, steps: usize) -> RealizationOptions {
    RealizationOptions {
        steps,
        quad: cfg.flow.quad,
        tol: cfg.tolerance("pushforward"),
        tol_closed: cfg.tolerance("closedness"),
        ..Default::default()
    }
}

fn realize(cfg: &RunConfig, report: &mut Report) -> Result<(), ConfigError> {
    let (spray, chart) = match spray_setup(cfg)? {
        Ok(v) => v,
        Err(e) => {
            setup_error(report, "realization", e);
            return Ok(());
        }
    };
    let zs = cotangent_points(cfg, &mut sampler(cfg));
    let cr = check_realization(&spray, &chart, &zs, &realization_options(cfg, cfg.flow.steps));
    report.absorb("realization", &cr, cfg, same, "pushforward");

    let n = cfg.manifold.dim;
    let zero = map_indexed(&zs, |_, z| zero_section_residual(&spray, &chart, &z[..n], cfg.flow.quad, cfg.flow.steps));
    let mut zr = CheckReport::new();
    zr.limit("zero-section", cfg.tolerance("zero-section"));
    for (i, v) in zero.into_iter().enumerate() {
        match v {
            Ok(v) => zr.push(i, &zs[i][..n], "zero-section", v),
            Err(e) => zr.fail(i, &zs[i][..n], e),
        }
    }
    report.absorb("zero-section", &zr, cfg, same, "");

    let head = &zs[..cfg.flow.refine_samples.min(zs.len())];
    refinement(report, "realization", cfg, "pushforward", |steps| {
        check_realization(&spray, &chart, head, &realization_options(cfg, steps))
    });
    Ok(())
}

fn dual_pair(cfg: &RunConfig, report: &mut Report) -> Result<(), ConfigError> {
    let (spray, chart) = match spray_setup(cfg)? {
        Ok(v) => v,
        Err(e) => {
            setup_error(report, "dual-pair", e);
            return Ok(());
        }
    };
    let zs = cotangent_points(cfg, &mut sampler(cfg));
    let opts = |steps| RealizationOptions { tol: cfg.tolerance("exp-pushforward"), ..realization_options(cfg, steps) };
    let cr = check_self_dual_pair(&spray, &chart, &zs, &opts(cfg.flow.steps));
    report.absorb("dual-pair", &cr, cfg, same, "exp-pushforward");
    let head = &zs[..cfg.flow.refine_samples.min(zs.len())];
    refinement(report, "dual-pair", cfg, "exp-pushforward", |steps| check_self_dual_pair(&spray, &chart, head, &opts(steps)));
    Ok(())
}

fn conormal_setup(cfg: &RunConfig, suite: &str, report: &mut Report) -> Result<Option<ConormalChart>, ConfigError> {
    let radius = match &cfg.transversal {
        Some(t) => t.fiber_radius,
        None => return Err(ConfigError::Field { field: "transversal".into(), message: format!("`{suite}` needs a transversal section") }),
    };
    report.notes.push(FRAME_NOTE.into());
    match cfg.transversal_data()?.and_then(|td| conormal_chart(&td, radius)) {
        Ok(cc) => Ok(Some(cc)),
        Err(e) => {
            setup_error(report, suite, e);
            Ok(None)
        }
    }
}

fn normal_form(cfg: &RunConfig, report: &mut Report) -> Result<(), ConfigError> {
    let Some(cc) = conormal_setup(cfg, "normal-form", report)? else {
        return Ok(());
    };
    let (spray, chart) = match spray_setup(cfg)? {
        Ok(v) => v,
        Err(e) => {
            setup_error(report, "normal-form", e);
            return Ok(());
        }
    };
    let zs = conormal_points(&cc, &mut sampler(cfg), cfg.samples.count, 10);
    let opts = |steps| NormalFormOptions {
        disc: Discretization { steps, quad: cfg.flow.quad },
        tol: cfg.tolerance("normal-form"),
        tol_identity: cfg.tolerance("identity-on-X"),
    };
    let cr = verify_normal_form(&spray, &chart, &cc, &zs, &opts(cfg.flow.steps));
    report.absorb("normal-form", &cr, cfg, same, "normal-form");
    let head = &zs[..cfg.flow.refine_samples.min(zs.len())];
    refinement(report, "normal-form", cfg, "normal-form", |steps| verify_normal_form(&spray, &chart, &cc, head, &opts(steps)));
    Ok(())
}

fn moser(cfg: &RunConfig, report: &mut Report) -> Result<(), ConfigError> {
    let spec = cfg.moser.clone().unwrap_or_default();
    let alpha = cfg.gauge_alpha()?;
    if alpha.is_none() && cfg.transversal.is_none() {
        return Err(ConfigError::Field {
            field: "moser.alpha".into(),
            message: "`moser` needs a gauge 1-form or a transversal section".into(),
        });
    }
    if let Some(alpha) = alpha {
        match GaugePath::new(cfg.bivector()?, alpha) {
            Ok(gp) => {
                let xs = base_points(cfg, &mut sampler(cfg), cfg.samples.count);
                let opts = MoserOptions {
                    steps: spec.steps,
                    tol: cfg.tolerance("stabilization"),
                    tol_cocycle: cfg.tolerance("cocycle"),
                };
                let cr = verify_moser(&gp, &xs, &opts);
                report.absorb("gauge-path", &cr, cfg, same, "");
            }
            Err(e) => setup_error(report, "gauge-path", e),
        }
    }
    if cfg.transversal.is_some() {
        let Some(cc) = conormal_setup(cfg, "extension", report)? else {
            return Ok(());
        };
        let (spray, chart) = match spray_setup(cfg)? {
            Ok(v) => v,
            Err(e) => {
                setup_error(report, "extension", e);
                return Ok(());
            }
        };
        let disc = Discretization { steps: spec.sigma_steps, quad: spec.sigma_quad };
        let mut s = sampler(cfg);
        let zs = conormal_points(&cc, &mut s, spec.extension_samples, 3);
        let opts = ExtensionOptions {
            steps: spec.extension_steps,
            tol: cfg.tolerance("extension-pushforward"),
            tol_match: cfg.tolerance("extension-restriction-match"),
            tol_fix: cfg.tolerance("extension-fixes-X"),
            tol_identity: cfg.tolerance("extension-identity-differential"),
        };
        let sigma = |cc: &ConormalChart, z: &[f64]| sigma_tilde(&spray, &chart, cc, z, disc);
        let cr = verify_extension_independence(&cc, sigma, canonical_extension, &zs, &opts);
        report.absorb("extension", &cr, cfg, |k| format!("extension-{k}"), "pushforward");
    }
    Ok(())
}

fn split(cfg: &RunConfig, report: &mut Report) -> Result<(), ConfigError> {
    if cfg.group.is_none() {
        return Err(ConfigError::Field { field: "group".into(), message: "`split` needs a group section".into() });
    }
    let pi = cfg.bivector()?;
    let action = cfg.group_action()?;
    let sp = &cfg.split;
    let seed = cfg.samples.seed.unwrap_or(0);

    let mut s = Sampler::new(seed);
    let probes: Vec<Vec<f64>> = (0..8)
        .map(|_| s.in_ball(pi.dim(), sp.half_width).iter().zip(action.x0()).map(|(d, c)| c + d).collect())
        .collect();
    match action.check_poisson(|x| pi.matrix(x), &probes) {
        Ok(v) => report.push(Record::new("group", "group-poisson", v, cfg.tolerance("group-poisson"), Comparison::AtMost, probes.len())),
        Err(e) => report.push(Record::error("group", "group-poisson", e.to_string())),
    }

    let opts = SplitOptions {
        half_width: sp.half_width,
        fiber_radius: sp.fiber_radius,
        disc: Discretization { steps: sp.steps, quad: sp.quad },
        moser_steps: sp.moser_steps,
        tol: cfg.tolerance("symplectic-block"),
        tol_group: cfg.tolerance("group-conjugation"),
    };
    report.notes.push(FRAME_NOTE.into());
    match weinstein_split(&pi, &action, opts) {
        Ok(splitting) => {
            let vs = splitting.sample_plan(sp.samples, sp.sample_radius, sp.sample_scale, seed);
            let cr = splitting.verify(&vs);
            report.absorb("splitting", &cr, cfg, same, "");
        }
        Err(e) => setup_error(report, "splitting", e),
    }

    if sp.b_map_trials > 0 {
        let cr = b_map_trials(&[1, 2, 3], sp.b_map_trials, 0.3, seed);
        report.absorb("b-map", &cr, cfg, same, "");
    }
    Ok(())
}
