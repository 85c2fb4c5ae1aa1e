use std::f64::consts::TAU;

use nalgebra::DMatrix;

use super::sqrt::{b_map, SymplecticPair};
use crate::error::{Error, Result};
use crate::linalg;

/// Tolerance for group closure and the identity element.
pub const CLOSURE_TOL: f64 = 1e-10;
/// Tolerance for `g π(x) gᵀ = π(g x)`.
pub const POISSON_ACTION_TOL: f64 = 1e-8;
/// Default trapezoid node count for circle actions.
pub const CIRCLE_NODES: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub enum GroupKind {
    Finite(Vec<DMatrix<f64>>),
    /// `θ ↦ exp(θ A)` with `exp(2π A) = I`.
    Circle { generator: DMatrix<f64>, nodes: usize },
}

/// A compact group acting linearly about the fixed point `x₀`: `x ↦ x₀ + g (x − x₀)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupAction {
    kind: GroupKind,
    x0: Vec<f64>,
    /// Haar quadrature: elements with weights summing to one.
    elements: Vec<(DMatrix<f64>, f64)>,
}

fn close(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    linalg::max_abs(&(a - b)) <= CLOSURE_TOL * linalg::max_abs(b).max(1.0)
}

impl GroupAction {
    pub fn trivial(x0: Vec<f64>) -> Self {
        let n = x0.len();
        GroupAction::finite(vec![DMatrix::identity(n, n)], x0).expect("the trivial group is valid")
    }

    pub fn finite(mats: Vec<DMatrix<f64>>, x0: Vec<f64>) -> Result<Self> {
        let n = x0.len();
        if mats.is_empty() {
            return Err(Error::InvalidAction("empty element list".into()));
        }
        for (i, g) in mats.iter().enumerate() {
            if g.shape() != (n, n) {
                return Err(Error::InvalidAction(format!("element {i} is not {n}×{n}")));
            }
            if !(linalg::conditioning_ratio(g) >= 1e-10) {
                return Err(Error::InvalidAction(format!("element {i} is not invertible")));
            }
        }
        let id = DMatrix::identity(n, n);
        if !mats.iter().any(|g| close(g, &id)) {
            return Err(Error::InvalidAction("identity is not listed".into()));
        }
        for (i, a) in mats.iter().enumerate() {
            for (j, b) in mats.iter().enumerate() {
                let p = a * b;
                if !mats.iter().any(|g| close(g, &p)) {
                    return Err(Error::InvalidAction(format!("product of elements {i} and {j} is not listed")));
                }
            }
        }
        let w = 1.0 / mats.len() as f64;
        let elements = mats.iter().map(|g| (g.clone(), w)).collect();
        Ok(GroupAction { kind: GroupKind::Finite(mats), x0, elements })
    }

    pub fn circle(generator: DMatrix<f64>, nodes: usize, x0: Vec<f64>) -> Result<Self> {
        let n = x0.len();
        if generator.shape() != (n, n) {
            return Err(Error::InvalidAction(format!("circle generator is not {n}×{n}")));
        }
        if nodes == 0 {
            return Err(Error::InvalidAction("circle needs at least one node".into()));
        }
        let full = linalg::expm(&(&generator * TAU));
        if linalg::max_abs(&(full - DMatrix::identity(n, n))) > 1e-8 {
            return Err(Error::InvalidAction("exp(2πA) is not the identity".into()));
        }
        let w = 1.0 / nodes as f64;
        let elements = (0..nodes).map(|k| (linalg::expm(&(&generator * (TAU * k as f64 / nodes as f64))), w)).collect();
        Ok(GroupAction { kind: GroupKind::Circle { generator, nodes }, x0, elements })
    }

    pub fn kind(&self) -> &GroupKind {
        &self.kind
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn is_trivial(&self) -> bool {
        self.elements.len() == 1
    }

    /// Haar quadrature `(g, w)`.
    pub fn elements(&self) -> &[(DMatrix<f64>, f64)] {
        &self.elements
    }

    /// Element at angle `θ` for circles, the listed element `θ as usize` otherwise.
    pub fn element_at(&self, theta: f64) -> DMatrix<f64> {
        match &self.kind {
            GroupKind::Finite(m) => m[theta as usize % m.len()].clone(),
            GroupKind::Circle { generator, .. } => linalg::expm(&(generator * theta)),
        }
    }

    pub fn act(&self, g: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
        let d: Vec<f64> = x.iter().zip(&self.x0).map(|(a, b)| a - b).collect();
        let gd = g * nalgebra::DVector::from_vec(d);
        gd.iter().zip(&self.x0).map(|(a, b)| a + b).collect()
    }

    /// Largest `|g π(x) gᵀ − π(g x)|` over the quadrature elements and `points`;
    /// above [`POISSON_ACTION_TOL`] the action is rejected.
    pub fn check_poisson<P>(&self, pi: P, points: &[Vec<f64>]) -> Result<f64>
    where
        P: Fn(&[f64]) -> Result<DMatrix<f64>>,
    {
        let mut worst: f64 = 0.0;
        for x in points {
            let p = pi(x)?;
            for (g, _) in &self.elements {
                let r = linalg::max_abs(&(g * &p * g.transpose() - pi(&self.act(g, x))?));
                worst = worst.max(r);
            }
        }
        if worst > POISSON_ACTION_TOL {
            return Err(Error::InvalidAction(format!("elements do not preserve π (residual {worst:e})")));
        }
        Ok(worst)
    }

    /// Haar average of `f(g)`.
    pub fn average<F>(&self, f: F) -> Result<DMatrix<f64>>
    where
        F: Fn(&DMatrix<f64>) -> Result<DMatrix<f64>>,
    {
        let mut acc: Option<DMatrix<f64>> = None;
        for (g, w) in &self.elements {
            let v = f(g)? * *w;
            acc = Some(match acc {
                Some(a) => a + v,
                None => v,
            });
        }
        Ok(acc.expect("groups are nonempty"))
    }

    /// The averaged Euclidean inner product `Σ w gᵀ g`.
    pub fn invariant_metric(&self) -> DMatrix<f64> {
        self.average(|g| Ok(g.transpose() * g)).expect("infallible")
    }
}

/// A symplectic vector bundle over a `y`-box with a fiberwise linear action.
pub trait EquivariantBundle {
    fn fiber_dim(&self) -> usize;
    /// Base parameter of the fixed point.
    fn base_point(&self) -> Vec<f64>;
    /// Fiber form `σ_y` in the bundle frame.
    fn form(&self, y: &[f64]) -> Result<DMatrix<f64>>;
    /// Induced action `g·y` on the base.
    fn act(&self, g: &DMatrix<f64>, y: &[f64]) -> Vec<f64>;
    /// `ρ_y(g): E_y → E_{g·y}` in bundle frames.
    fn rep(&self, g: &DMatrix<f64>, y: &[f64]) -> Result<DMatrix<f64>>;
}

/// `A_y = ∫_G ρ_{x₀}(g)^{-1} ρ_y(g) dμ(g)`.
pub fn average_intertwiner<B: EquivariantBundle + ?Sized>(
    action: &GroupAction,
    bundle: &B,
    y: &[f64],
) -> Result<DMatrix<f64>> {
    let y0 = bundle.base_point();
    let a = action.average(|g| {
        let r0 = bundle.rep(g, &y0)?;
        let inv = linalg::checked_inverse(&r0, 1e-10)?;
        Ok(inv * bundle.rep(g, y)?)
    })?;
    let ratio = linalg::conditioning_ratio(&a);
    if !(ratio >= 1e-8) {
        return Err(Error::NotInvertible { ratio });
    }
    Ok(a)
}

/// `Φ_y = b_{σ'_y} A_y` with `σ'_y = A_y^{-T} σ_y A_y^{-1}` and `b` relative to `σ_{x₀}`,
/// so that `Φ_yᵀ σ_{x₀} Φ_y = σ_y` and `Φ_{gy} ρ_y(g) = ρ_{x₀}(g) Φ_y`.
pub fn equivariant_trivialization<B: EquivariantBundle + ?Sized>(
    action: &GroupAction,
    bundle: &B,
    y: &[f64],
) -> Result<DMatrix<f64>> {
    let a = average_intertwiner(action, bundle, y)?;
    let ainv = linalg::checked_inverse(&a, 1e-8)?;
    let transported = linalg::antisymmetrize(&(ainv.transpose() * bundle.form(y)? * &ainv));
    let sigma0 = bundle.form(&bundle.base_point())?;
    let b = b_map(&SymplecticPair::new(sigma0, transported)?)?;
    Ok(b * a)
}

/// `(|Φ_yᵀ σ₀ Φ_y − σ_y|, max_g |Φ_{gy} ρ_y(g) − ρ_{x₀}(g) Φ_y|)` over `tests`.
pub fn trivialization_residuals<B: EquivariantBundle + ?Sized>(
    action: &GroupAction,
    bundle: &B,
    y: &[f64],
    tests: &[DMatrix<f64>],
) -> Result<(f64, f64)> {
    let y0 = bundle.base_point();
    let sigma0 = bundle.form(&y0)?;
    let phi = equivariant_trivialization(action, bundle, y)?;
    let form = linalg::max_abs(&(phi.transpose() * &sigma0 * &phi - bundle.form(y)?));
    let mut equi: f64 = 0.0;
    for g in tests {
        let gy = bundle.act(g, y);
        let lhs = equivariant_trivialization(action, bundle, &gy)? * bundle.rep(g, y)?;
        let rhs = bundle.rep(g, &y0)? * &phi;
        equi = equi.max(linalg::max_abs(&(lhs - rhs)));
    }
    Ok((form, equi))
}
