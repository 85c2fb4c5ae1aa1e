use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::field::jet::Dual;
use crate::field::{ChartBox, Expr, ExpressionField};

/// Parametrized submanifold `χ: k-box → n-chart`.
#[derive(Debug, Clone)]
pub struct Embedding {
    params: Arc<ChartBox>,
    ambient: Arc<ChartBox>,
    comps: Vec<ExpressionField>,
}

impl Embedding {
    pub fn new(params: Arc<ChartBox>, ambient: Arc<ChartBox>, comps: Vec<Expr>) -> Result<Self> {
        if comps.len() != ambient.dim() {
            return Err(Error::InvalidInput(format!(
                "embedding has {} components but the ambient chart has dimension {}",
                comps.len(),
                ambient.dim()
            )));
        }
        if params.dim() > ambient.dim() {
            return Err(Error::InvalidInput("parameter dimension exceeds ambient dimension".into()));
        }
        let comps = comps
            .into_iter()
            .map(|e| ExpressionField::new(e, params.clone()))
            .collect::<Result<_>>()?;
        Ok(Embedding { params, ambient, comps })
    }

    /// `y ↦ origin + K y` for an `n×k` matrix `K`.
    pub fn affine(params: Arc<ChartBox>, ambient: Arc<ChartBox>, origin: &[f64], k: &DMatrix<f64>) -> Result<Self> {
        let n = ambient.dim();
        if origin.len() != n || k.nrows() != n || k.ncols() != params.dim() {
            return Err(Error::InvalidInput("affine embedding data has inconsistent shapes".into()));
        }
        let comps = (0..n)
            .map(|i| {
                let row: Vec<f64> = k.row(i).iter().copied().collect();
                Expr::affine(origin[i], &row)
            })
            .collect();
        Self::new(params, ambient, comps)
    }

    /// The identity of an open subset (`k = n`).
    pub fn identity(ambient: Arc<ChartBox>) -> Self {
        let n = ambient.dim();
        Self::affine(ambient.clone(), ambient, &vec![0.0; n], &DMatrix::identity(n, n))
            .expect("identity embedding is well formed")
    }

    pub fn params(&self) -> &Arc<ChartBox> {
        &self.params
    }

    pub fn ambient(&self) -> &Arc<ChartBox> {
        &self.ambient
    }

    pub fn param_dim(&self) -> usize {
        self.params.dim()
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient.dim()
    }

    pub fn components(&self) -> &[ExpressionField] {
        &self.comps
    }

    /// `χ(y)` with both domain checks.
    pub fn eval(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.params.check(y)?;
        let x = self.eval_unchecked(y)?;
        self.ambient.check(&x)?;
        Ok(x)
    }

    /// `χ(y)` without box checks; finite-difference stencils may step just outside.
    pub fn eval_unchecked(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.params.dim() {
            return Err(Error::InvalidInput("parameter has wrong length".into()));
        }
        self.comps.iter().map(|c| c.eval_generic(y)).collect()
    }

    /// Exact `dχ(y)` (`n×k`), without box checks.
    pub fn jacobian_unchecked(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        let (n, k) = (self.ambient_dim(), self.param_dim());
        let mut d = DMatrix::zeros(n, k);
        let mut ys: Vec<Dual<f64>> = y.iter().map(|&v| Dual::constant(v)).collect();
        for l in 0..k {
            ys[l].eps = 1.0;
            for (i, c) in self.comps.iter().enumerate() {
                d[(i, l)] = c.eval_generic(&ys)?.eps;
            }
            ys[l].eps = 0.0;
        }
        Ok(d)
    }

    pub fn jacobian(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        self.params.check(y)?;
        self.jacobian_unchecked(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_jacobian() {
        let p = Arc::new(ChartBox::new("y", vec![(-1.0, 1.0)]).unwrap());
        let a = Arc::new(ChartBox::new("x", vec![(-2.0, 2.0); 3]).unwrap());
        let e = Embedding::new(p, a, vec![Expr::var(0), Expr::parse("x1^2").unwrap(), Expr::Const(0.0)]).unwrap();
        assert_eq!(e.eval(&[0.5]).unwrap(), vec![0.5, 0.25, 0.0]);
        assert_eq!(e.jacobian(&[0.5]).unwrap().as_slice(), &[1.0, 1.0, 0.0]);
        assert!(matches!(e.eval(&[1.5]), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn point_embedding() {
        let a = Arc::new(ChartBox::new("x", vec![(-2.0, 2.0); 2]).unwrap());
        let e = Embedding::affine(Arc::new(ChartBox::point("pt")), a, &[0.5, 0.0], &DMatrix::zeros(2, 0)).unwrap();
        assert_eq!(e.eval(&[]).unwrap(), vec![0.5, 0.0]);
        assert_eq!(e.jacobian(&[]).unwrap().shape(), (2, 0));
    }
}
