//! Run configuration: JSON schema, validation and construction of the core
//! objects it describes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DMatrix;
use pnf_core::equivariant::GroupAction;
use pnf_core::field::{BivectorField, ChartBox, Expr, OneFormField};
use pnf_core::transversal::{check_transversal, Embedding, TransversalData};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Syntax { path: String, line: usize, column: usize, message: String },
    #[error("{field}: {message}")]
    Field { field: String, message: String },
    #[error("unknown built-in example `{0}`")]
    UnknownExample(String),
}

fn field_error(field: impl Into<String>, message: impl std::fmt::Display) -> ConfigError {
    ConfigError::Field { field: field.into(), message: message.to_string() }
}

/// Everything a command needs. Unknown keys are rejected at every level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub manifold: ManifoldSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transversal: Option<TransversalSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<GroupSpec>,
    #[serde(default)]
    pub flow: FlowSpec,
    #[serde(default)]
    pub samples: SampleSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moser: Option<MoserSpec>,
    #[serde(default)]
    pub split: SplitSpec,
    /// Per-record tolerance overrides, keyed by record name.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub output: OutputSpec,
}

/// Chart box and bivector. Slot keys are `"i,j"` with `1 ≤ i < j ≤ dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldSpec {
    pub dim: usize,
    pub bounds: Vec<[f64; 2]>,
    pub bivector: BTreeMap<String, String>,
}

/// Embedding `y ↦ χ(y)` of a parameter box, with the conormal fiber radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransversalSpec {
    pub params: Vec<[f64; 2]>,
    pub map: Vec<String>,
    pub fiber_radius: f64,
}

/// Linear action on the chart fixing `x0`. Matrices are row-major lists of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum GroupSpec {
    Trivial { x0: Vec<f64> },
    Finite { x0: Vec<f64>, elements: Vec<Vec<Vec<f64>>> },
    Cyclic { x0: Vec<f64>, generator: Vec<Vec<f64>>, order: usize },
    Circle { x0: Vec<f64>, generator: Vec<Vec<f64>>, nodes: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowSpec {
    pub steps: usize,
    pub quad: usize,
    /// Bound on `|ξ|` for flow states.
    pub rho_max: f64,
    /// Step counts `[coarse, fine]` for the refinement ratio record.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refine: Option<[usize; 2]>,
    pub refine_samples: usize,
}

impl Default for FlowSpec {
    fn default() -> Self {
        FlowSpec { steps: 64, quad: 16, rho_max: 1.0, refine: None, refine_samples: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleSpec {
    pub count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Radius of the base-point ball around the chart center.
    pub base_radius: f64,
    /// Radius of the covector ball.
    pub fiber_radius: f64,
}

impl Default for SampleSpec {
    fn default() -> Self {
        SampleSpec { count: 0, seed: None, base_radius: 0.5, fiber_radius: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MoserSpec {
    /// Components of α for the gauge path `π_t` generated by `t·dα`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<String>>,
    pub steps: usize,
    /// Flow discretization of σ̃ in the extension-independence suite.
    pub sigma_steps: usize,
    pub sigma_quad: usize,
    pub extension_steps: usize,
    pub extension_samples: usize,
}

impl Default for MoserSpec {
    fn default() -> Self {
        MoserSpec { alpha: None, steps: 64, sigma_steps: 8, sigma_quad: 8, extension_steps: 8, extension_samples: 6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub half_width: f64,
    pub fiber_radius: f64,
    pub steps: usize,
    pub quad: usize,
    pub moser_steps: usize,
    pub samples: usize,
    pub sample_radius: f64,
    pub sample_scale: f64,
    pub b_map_trials: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            half_width: 0.2,
            fiber_radius: 0.2,
            steps: 8,
            quad: 8,
            moser_steps: 8,
            samples: 4,
            sample_radius: 0.1,
            sample_scale: 0.9,
            b_map_trials: 100,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
}

/// Record names accepted as tolerance keys, with their defaults.
/// Refinement is a lower bound on the coarse/fine residual ratio.
pub const DEFAULT_TOLERANCES: &[(&str, f64)] = &[
    ("jacobiator", 1e-9),
    ("antisymmetry", 1e-10),
    ("closedness", 1e-4),
    ("pushforward", 1e-5),
    ("zero-section", 1e-10),
    ("refinement", 8.0),
    ("exp-pushforward", 1e-5),
    ("orthogonality", 1e-6),
    ("normal-form", 1e-4),
    ("identity-on-X", 1e-10),
    ("leaf-rank", 0.5),
    ("stabilization", 1e-5),
    ("cocycle", 1e-7),
    ("extension-restriction-match", 1e-8),
    ("extension-pushforward", 1e-4),
    ("extension-fixes-X", 1e-8),
    ("extension-identity-differential", 1e-6),
    ("group-poisson", 1e-8),
    ("symplectic-block", 1e-4),
    ("cross-block", 1e-4),
    ("transversal-block", 1e-4),
    ("transversal-origin", 1e-4),
    ("group-conjugation", 1e-8),
    ("block-diagonal", 1e-8),
    ("b-identity", 1e-12),
    ("b-pullback", 1e-10),
    ("b-equivariance", 1e-9),
];

impl RunConfig {
    pub fn from_json(text: &str, origin: &str) -> Result<RunConfig, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError::Syntax {
            path: origin.to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn tolerance(&self, record: &str) -> f64 {
        self.tolerances.get(record).copied().unwrap_or_else(|| {
            DEFAULT_TOLERANCES
                .iter()
                .find(|(k, _)| *k == record)
                .map(|(_, v)| *v)
                .unwrap_or_else(|| panic!("no default tolerance for `{record}`"))
        })
    }

    /// Structural checks plus a trial construction of every core object.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.bivector()?;
        if self.samples.count > 0 && self.samples.seed.is_none() {
            return Err(field_error("samples.seed", "a seed is required when samples.count > 0"));
        }
        positive("samples.base_radius", self.samples.base_radius)?;
        positive("samples.fiber_radius", self.samples.fiber_radius)?;
        positive("flow.rho_max", self.flow.rho_max)?;
        nonzero("flow.steps", self.flow.steps)?;
        nonzero("flow.quad", self.flow.quad)?;
        if let Some([a, b]) = self.flow.refine {
            if a == 0 || b <= a {
                return Err(field_error("flow.refine", "expected [coarse, fine] with 0 < coarse < fine"));
            }
        }
        for (k, v) in &self.tolerances {
            if !DEFAULT_TOLERANCES.iter().any(|(n, _)| n == k) {
                return Err(field_error(format!("tolerances.{k}"), "unknown record name"));
            }
            positive(&format!("tolerances.{k}"), *v)?;
        }
        if let Some(m) = &self.moser {
            nonzero("moser.steps", m.steps)?;
            nonzero("moser.sigma_steps", m.sigma_steps)?;
            nonzero("moser.sigma_quad", m.sigma_quad)?;
            nonzero("moser.extension_steps", m.extension_steps)?;
            self.gauge_alpha()?;
        }
        let s = &self.split;
        positive("split.half_width", s.half_width)?;
        positive("split.fiber_radius", s.fiber_radius)?;
        positive("split.sample_radius", s.sample_radius)?;
        positive("split.sample_scale", s.sample_scale)?;
        nonzero("split.steps", s.steps)?;
        nonzero("split.quad", s.quad)?;
        nonzero("split.moser_steps", s.moser_steps)?;
        if self.transversal.is_some() {
            self.transversal_embedding()?;
        }
        if self.group.is_some() {
            self.group_action()?;
        }
        Ok(())
    }

    pub fn chart(&self) -> Result<Arc<ChartBox>, ConfigError> {
        let m = &self.manifold;
        if m.dim == 0 {
            return Err(field_error("manifold.dim", "dimension must be positive"));
        }
        if m.bounds.len() != m.dim {
            return Err(field_error(
                "manifold.bounds",
                format!("expected {} intervals, found {}", m.dim, m.bounds.len()),
            ));
        }
        let bounds = m.bounds.iter().map(|b| (b[0], b[1])).collect();
        ChartBox::new(self.name.clone().unwrap_or_else(|| "M".into()), bounds)
            .map(Arc::new)
            .map_err(|e| field_error("manifold.bounds", e))
    }

    pub fn bivector(&self) -> Result<BivectorField, ConfigError> {
        let chart = self.chart()?;
        let n = self.manifold.dim;
        let mut slots = Vec::with_capacity(self.manifold.bivector.len());
        for (key, src) in &self.manifold.bivector {
            let field = format!("manifold.bivector.\"{key}\"");
            let (i, j) = parse_slot(key, n).map_err(|m| field_error(&field, m))?;
            let e = Expr::parse(src).map_err(|e| field_error(&field, e))?;
            check_arity(&e, n).map_err(|m| field_error(&field, m))?;
            slots.push(((i - 1, j - 1), e));
        }
        BivectorField::new(chart, slots).map_err(|e| field_error("manifold.bivector", e))
    }

    pub fn gauge_alpha(&self) -> Result<Option<OneFormField>, ConfigError> {
        let Some(comps) = self.moser.as_ref().and_then(|m| m.alpha.as_ref()) else {
            return Ok(None);
        };
        let n = self.manifold.dim;
        if comps.len() != n {
            return Err(field_error("moser.alpha", format!("expected {n} components, found {}", comps.len())));
        }
        let exprs = comps
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let field = format!("moser.alpha[{i}]");
                let e = Expr::parse(s).map_err(|e| field_error(&field, e))?;
                check_arity(&e, n).map_err(|m| field_error(&field, m))?;
                Ok(e)
            })
            .collect::<Result<Vec<_>, ConfigError>>()?;
        OneFormField::new(self.chart()?, exprs).map(Some).map_err(|e| field_error("moser.alpha", e))
    }

    /// The embedding and the parameter points at which transversality is
    /// checked: the box center and up to 16 corners.
    pub fn transversal_embedding(&self) -> Result<(Embedding, Vec<Vec<f64>>), ConfigError> {
        let spec = self.transversal.as_ref().ok_or_else(|| field_error("transversal", "section is required"))?;
        positive("transversal.fiber_radius", spec.fiber_radius)?;
        let pi = self.bivector()?;
        let n = self.manifold.dim;
        if spec.map.len() != n {
            return Err(field_error("transversal.map", format!("expected {n} components, found {}", spec.map.len())));
        }
        let k = spec.params.len();
        let params = if k == 0 {
            ChartBox::point("X")
        } else {
            ChartBox::new("X", spec.params.iter().map(|b| (b[0], b[1])).collect())
                .map_err(|e| field_error("transversal.params", e))?
        };
        let comps = spec
            .map
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let field = format!("transversal.map[{i}]");
                let e = Expr::parse(s).map_err(|e| field_error(&field, e))?;
                check_arity(&e, k).map_err(|m| field_error(&field, m))?;
                Ok(e)
            })
            .collect::<Result<Vec<_>, ConfigError>>()?;
        let params = Arc::new(params);
        let e = Embedding::new(params.clone(), pi.chart().clone(), comps).map_err(|e| field_error("transversal", e))?;
        // probe the center and every corner of the parameter box
        let mut probes = vec![params.center()];
        for mask in 0..(1usize << k.min(4)) {
            probes.push(params.bounds().iter().enumerate().map(|(i, b)| if mask >> i & 1 == 1 { b.1 } else { b.0 }).collect());
        }
        Ok((e, probes))
    }

    /// Transversal data, or the core error when the embedding is not a
    /// Poisson transversal. Config problems are reported separately.
    pub fn transversal_data(&self) -> Result<pnf_core::Result<TransversalData>, ConfigError> {
        let pi = self.bivector()?;
        let (e, probes) = self.transversal_embedding()?;
        Ok(check_transversal(&pi, &e, &probes))
    }

    pub fn group_action(&self) -> Result<GroupAction, ConfigError> {
        let spec = self.group.as_ref().ok_or_else(|| field_error("group", "section is required"))?;
        let n = self.manifold.dim;
        let x0 = match spec {
            GroupSpec::Trivial { x0 } | GroupSpec::Finite { x0, .. } | GroupSpec::Cyclic { x0, .. } | GroupSpec::Circle { x0, .. } => x0,
        };
        if x0.len() != n {
            return Err(field_error("group.x0", format!("expected {n} coordinates, found {}", x0.len())));
        }
        let action = match spec {
            GroupSpec::Trivial { .. } => Ok(GroupAction::trivial(x0.clone())),
            GroupSpec::Finite { elements, .. } => {
                let mats = elements
                    .iter()
                    .enumerate()
                    .map(|(i, rows)| matrix(rows, n, &format!("group.elements[{i}]")))
                    .collect::<Result<Vec<_>, _>>()?;
                GroupAction::finite(mats, x0.clone())
            }
            GroupSpec::Cyclic { generator, order, .. } => {
                nonzero("group.order", *order)?;
                let g = matrix(generator, n, "group.generator")?;
                let mut mats = vec![DMatrix::identity(n, n)];
                for i in 1..*order {
                    mats.push(&g * &mats[i - 1]);
                }
                GroupAction::finite(mats, x0.clone())
            }
            GroupSpec::Circle { generator, nodes, .. } => {
                nonzero("group.nodes", *nodes)?;
                GroupAction::circle(matrix(generator, n, "group.generator")?, *nodes, x0.clone())
            }
        };
        action.map_err(|e| field_error("group", e))
    }
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(field_error(field, format!("expected a positive finite number, found {v}")))
    }
}

fn nonzero(field: &str, v: usize) -> Result<(), ConfigError> {
    if v > 0 {
        Ok(())
    } else {
        Err(field_error(field, "must be at least 1"))
    }
}

fn parse_slot(key: &str, n: usize) -> Result<(usize, usize), String> {
    let parsed = key
        .split_once(',')
        .and_then(|(a, b)| Some((a.trim().parse::<usize>().ok()?, b.trim().parse::<usize>().ok()?)));
    let Some((i, j)) = parsed else {
        return Err("slot keys have the form \"i,j\" with 1-based indices".into());
    };
    if i == j {
        return Err(format!("diagonal slot π^{{{i}{i}}} is not allowed: bivectors are antisymmetric by construction"));
    }
    if i > j {
        return Err(format!("only upper-triangular slots are stored; write \"{j},{i}\" with the negated entry"));
    }
    if i == 0 || j > n {
        return Err(format!("indices must lie in 1..={n}"));
    }
    Ok((i, j))
}

fn check_arity(e: &Expr, n: usize) -> Result<(), String> {
    if e.arity() > n {
        Err(format!("uses x{} but only {n} coordinates exist", e.arity()))
    } else {
        Ok(())
    }
}

fn matrix(rows: &[Vec<f64>], n: usize, field: &str) -> Result<DMatrix<f64>, ConfigError> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(field_error(field, format!("expected a {n}×{n} matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// Reads a config file, or a built-in example when `path` is `builtin:NAME`.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let shown = path.display().to_string();
    if let Some(name) = shown.strip_prefix("builtin:") {
        return crate::fixtures::builtin(name);
    }
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    RunConfig::from_json(&text, &shown)
}
