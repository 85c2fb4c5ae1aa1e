use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::chart::ChartBox;
use super::expr::{Expr, Program};
use super::jet::{Dual, Scalar};
use crate::error::{Error, Result};

/// Scalar function on a chart, evaluated exactly together with its jets.
#[derive(Debug, Clone)]
pub struct ExpressionField {
    expr: Expr,
    program: Program,
    chart: Arc<ChartBox>,
}

/// Value, gradient and (optionally) Hessian of an [`ExpressionField`] at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: Option<DMatrix<f64>>,
}

impl ExpressionField {
    pub fn new(expr: Expr, chart: Arc<ChartBox>) -> Result<Self> {
        if expr.arity() > chart.dim() {
            return Err(Error::InvalidInput(format!(
                "expression `{expr}` references x{} but chart `{}` has dimension {}",
                expr.arity(),
                chart.name(),
                chart.dim()
            )));
        }
        let program = expr.compile();
        Ok(ExpressionField { expr, program, chart })
    }

    pub fn parse(src: &str, chart: Arc<ChartBox>) -> Result<Self> {
        Self::new(Expr::parse(src)?, chart)
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn chart(&self) -> &Arc<ChartBox> {
        &self.chart
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        self.chart.check(x)?;
        self.program.eval(x)
    }

    /// Evaluation on an arbitrary scalar type; the caller is responsible for
    /// the domain check on the real parts.
    pub fn eval_generic<S: Scalar>(&self, x: &[S]) -> Result<S> {
        self.program.eval(x)
    }

    /// Exact value, gradient and, for `order == 2`, Hessian at `x`.
    pub fn eval_with_jet(&self, x: &[f64], order: u8) -> Result<Jet> {
        if !(1..=2).contains(&order) {
            return Err(Error::InvalidInput(format!("jet order must be 1 or 2, got {order}")));
        }
        self.chart.check(x)?;
        let n = x.len();
        let value = self.program.eval(x)?;
        let mut gradient = DVector::zeros(n);
        let mut xs: Vec<Dual<f64>> = x.iter().map(|&v| Dual::constant(v)).collect();
        for l in 0..n {
            xs[l].eps = 1.0;
            gradient[l] = self.program.eval(&xs)?.eps;
            xs[l].eps = 0.0;
        }
        let hessian = if order == 2 {
            let mut h = DMatrix::zeros(n, n);
            let mut xss: Vec<Dual<Dual<f64>>> =
                x.iter().map(|&v| Dual::constant(Dual::constant(v))).collect();
            for i in 0..n {
                for j in i..n {
                    xss[i].re.eps = 1.0;
                    xss[j].eps.re = 1.0;
                    let d = self.program.eval(&xss)?.eps.eps;
                    h[(i, j)] = d;
                    h[(j, i)] = d;
                    xss[i].re.eps = 0.0;
                    xss[j].eps.re = 0.0;
                }
            }
            Some(h)
        } else {
            None
        };
        Ok(Jet { value, gradient, hessian })
    }
}

/// Strictly-upper storage of an antisymmetric array of expression fields.
#[derive(Debug, Clone)]
struct UpperArray {
    chart: Arc<ChartBox>,
    n: usize,
    /// Row-major strictly-upper entries; `None` is an identically zero slot.
    entries: Vec<Option<ExpressionField>>,
}

fn upper_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

impl UpperArray {
    fn new(chart: Arc<ChartBox>, slots: Vec<((usize, usize), Expr)>) -> Result<Self> {
        let n = chart.dim();
        let mut entries = vec![None; n * (n.saturating_sub(1)) / 2];
        for ((i, j), e) in slots {
            if i >= j || j >= n {
                return Err(Error::InvalidInput(format!(
                    "slot ({},{}) is not strictly upper-triangular in dimension {n}",
                    i + 1,
                    j + 1
                )));
            }
            let k = upper_index(n, i, j);
            if entries[k].is_some() {
                return Err(Error::InvalidInput(format!("slot ({},{}) given twice", i + 1, j + 1)));
            }
            if !e.is_zero_literal() {
                entries[k] = Some(ExpressionField::new(e, chart.clone())?);
            }
        }
        Ok(UpperArray { chart, n, entries })
    }

    fn get(&self, i: usize, j: usize) -> Option<&ExpressionField> {
        if i < j {
            self.entries[upper_index(self.n, i, j)].as_ref()
        } else {
            None
        }
    }

    fn slots(&self) -> impl Iterator<Item = ((usize, usize), &ExpressionField)> + '_ {
        let n = self.n;
        (0..n)
            .flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
            .filter_map(move |(i, j)| self.get(i, j).map(|f| ((i, j), f)))
    }

    fn matrix_generic<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
        let n = self.n;
        let mut m = vec![S::cst(0.0); n * n];
        for ((i, j), f) in self.slots() {
            let v = f.eval_generic(x)?;
            m[i * n + j] = v;
            m[j * n + i] = -v;
        }
        Ok(m)
    }

    fn matrix(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.chart.check(x)?;
        let n = self.n;
        let m = self.matrix_generic(x)?;
        Ok(DMatrix::from_row_slice(n, n, &m))
    }

    fn matrix_with_partials(&self, x: &[f64]) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
        self.chart.check(x)?;
        let n = self.n;
        let mut value = DMatrix::zeros(n, n);
        let mut partials = vec![DMatrix::zeros(n, n); n];
        let mut xs: Vec<Dual<f64>> = x.iter().map(|&v| Dual::constant(v)).collect();
        for ((i, j), f) in self.slots() {
            let v = f.eval_generic(x)?;
            value[(i, j)] = v;
            value[(j, i)] = -v;
            for (l, p) in partials.iter_mut().enumerate() {
                xs[l].eps = 1.0;
                let d = f.eval_generic(&xs)?.eps;
                xs[l].eps = 0.0;
                p[(i, j)] = d;
                p[(j, i)] = -d;
            }
        }
        Ok((value, partials))
    }

    fn negated(&self) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|e| {
                e.as_ref().map(|f| {
                    ExpressionField::new(Expr::Neg(Box::new(f.expr().clone())), self.chart.clone())
                        .expect("negation preserves arity")
                })
            })
            .collect();
        UpperArray { chart: self.chart.clone(), n: self.n, entries }
    }

    fn from_constant(chart: Arc<ChartBox>, m: &DMatrix<f64>) -> Result<Self> {
        let n = chart.dim();
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::InvalidInput("constant matrix has wrong shape".into()));
        }
        let mut slots = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                slots.push(((i, j), Expr::Const(m[(i, j)])));
            }
        }
        Self::new(chart, slots)
    }
}

/// Bivector field `π` with `π^{ij} = π(dx^i, dx^j)`; antisymmetric by storage.
#[derive(Debug, Clone)]
pub struct BivectorField {
    inner: UpperArray,
    poisson_certified: bool,
}

impl BivectorField {
    /// `slots` are zero-based strictly-upper index pairs.
    pub fn new(chart: Arc<ChartBox>, slots: Vec<((usize, usize), Expr)>) -> Result<Self> {
        Ok(BivectorField { inner: UpperArray::new(chart, slots)?, poisson_certified: false })
    }

    pub fn constant(chart: Arc<ChartBox>, m: &DMatrix<f64>) -> Result<Self> {
        Ok(BivectorField { inner: UpperArray::from_constant(chart, m)?, poisson_certified: false })
    }

    pub fn zero(chart: Arc<ChartBox>) -> Self {
        BivectorField { inner: UpperArray::new(chart, Vec::new()).unwrap(), poisson_certified: false }
    }

    pub fn dim(&self) -> usize {
        self.inner.n
    }

    pub fn chart(&self) -> &Arc<ChartBox> {
        &self.inner.chart
    }

    /// Entry `π^{ij}` for `i < j`, `None` if identically zero.
    pub fn entry(&self, i: usize, j: usize) -> Option<&ExpressionField> {
        self.inner.get(i, j)
    }

    pub fn slots(&self) -> impl Iterator<Item = ((usize, usize), &ExpressionField)> + '_ {
        self.inner.slots()
    }

    pub fn matrix(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.inner.matrix(x)
    }

    /// `π(x)` and the exact partials `∂_l π(x)`, `l = 0..n`.
    pub fn matrix_with_partials(&self, x: &[f64]) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
        self.inner.matrix_with_partials(x)
    }

    /// Row-major `π(x)` over any scalar type (no domain check).
    pub fn matrix_generic<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
        self.inner.matrix_generic(x)
    }

    pub fn negated(&self) -> Self {
        BivectorField { inner: self.inner.negated(), poisson_certified: self.poisson_certified }
    }

    pub fn is_poisson_certified(&self) -> bool {
        self.poisson_certified
    }

    /// Marks the field Poisson after checking the Jacobiator at `points`.
    pub fn certify(mut self, points: &[Vec<f64>], tol: f64) -> Result<Self> {
        for p in points {
            let r = super::calculus::jacobiator(&self, p)?.max_abs();
            if r > tol {
                return Err(Error::InvalidInput(format!(
                    "Jacobiator residual {r:.3e} exceeds {tol:.1e} at {p:?}"
                )));
            }
        }
        self.poisson_certified = true;
        Ok(self)
    }
}

/// Two-form `B` with `B_{ij} = B(∂_i, ∂_j)`; antisymmetric by storage.
#[derive(Debug, Clone)]
pub struct TwoFormField {
    inner: UpperArray,
    closed: bool,
}

impl TwoFormField {
    pub fn new(chart: Arc<ChartBox>, slots: Vec<((usize, usize), Expr)>) -> Result<Self> {
        Ok(TwoFormField { inner: UpperArray::new(chart, slots)?, closed: false })
    }

    pub fn constant(chart: Arc<ChartBox>, m: &DMatrix<f64>) -> Result<Self> {
        Ok(TwoFormField { inner: UpperArray::from_constant(chart, m)?, closed: false })
    }

    pub fn dim(&self) -> usize {
        self.inner.n
    }

    pub fn chart(&self) -> &Arc<ChartBox> {
        &self.inner.chart
    }

    pub fn matrix(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.inner.matrix(x)
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Marks the form closed after the numeric `dB` check at `points`.
    pub fn certify_closed(mut self, points: &[Vec<f64>], h: f64, tol: f64) -> Result<Self> {
        for p in points {
            let d = super::calculus::exterior_derivative_numeric(
                |x| self.matrix(x),
                p,
                h,
                Some(self.chart()),
            )?;
            if d.max_abs() > tol {
                return Err(Error::InvalidInput(format!(
                    "dB residual {:.3e} exceeds {tol:.1e} at {p:?}",
                    d.max_abs()
                )));
            }
        }
        self.closed = true;
        Ok(self)
    }
}

/// One-form `α = Σ α_i dx^i`.
#[derive(Debug, Clone)]
pub struct OneFormField {
    chart: Arc<ChartBox>,
    comps: Vec<ExpressionField>,
}

impl OneFormField {
    pub fn new(chart: Arc<ChartBox>, comps: Vec<Expr>) -> Result<Self> {
        if comps.len() != chart.dim() {
            return Err(Error::InvalidInput(format!(
                "one-form needs {} components, got {}",
                chart.dim(),
                comps.len()
            )));
        }
        let comps = comps
            .into_iter()
            .map(|e| ExpressionField::new(e, chart.clone()))
            .collect::<Result<_>>()?;
        Ok(OneFormField { chart, comps })
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    pub fn chart(&self) -> &Arc<ChartBox> {
        &self.chart
    }

    pub fn components(&self) -> &[ExpressionField] {
        &self.comps
    }

    pub fn value(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.chart.check(x)?;
        let v = self.comps.iter().map(|c| c.eval_generic(x)).collect::<Result<Vec<_>>>()?;
        Ok(DVector::from_vec(v))
    }

    /// Exact `(dα)_{ij} = ∂_i α_j − ∂_j α_i`.
    pub fn exterior_derivative(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.chart.check(x)?;
        let n = self.dim();
        let mut grads = DMatrix::zeros(n, n); // grads[(j, i)] = ∂_i α_j
        let mut xs: Vec<Dual<f64>> = x.iter().map(|&v| Dual::constant(v)).collect();
        for i in 0..n {
            xs[i].eps = 1.0;
            for (j, c) in self.comps.iter().enumerate() {
                grads[(j, i)] = c.eval_generic(&xs)?.eps;
            }
            xs[i].eps = 0.0;
        }
        Ok(grads.transpose() - grads)
    }
}
