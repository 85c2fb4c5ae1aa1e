//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Largest absolute entry (0 for an empty matrix).
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// `|M + Mᵀ|∞`.
pub fn antisymmetry_defect(m: &DMatrix<f64>) -> f64 {
    max_abs(&(m + m.transpose()))
}

/// `(M − Mᵀ)/2`.
pub fn antisymmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m - m.transpose()) * 0.5
}

/// Extreme singular values `(σ_min, σ_max)` of the thin SVD.
pub fn singular_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    if m.is_empty() {
        return (0.0, 0.0);
    }
    let sv = m.singular_values();
    (sv.min(), sv.max())
}

/// `σ_min / σ_max`, or 0 for a zero matrix.
pub fn conditioning_ratio(m: &DMatrix<f64>) -> f64 {
    let (lo, hi) = singular_extremes(m);
    if hi == 0.0 {
        0.0
    } else {
        lo / hi
    }
}

/// Inverse with a relative singular-value guard.
pub fn checked_inverse(m: &DMatrix<f64>, threshold: f64) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidInput("inverse of a non-square matrix".into()));
    }
    if m.is_empty() {
        return Ok(m.clone());
    }
    let ratio = conditioning_ratio(m);
    if !(ratio >= threshold) {
        return Err(Error::NotInvertible { ratio });
    }
    m.clone().try_inverse().ok_or(Error::NotInvertible { ratio })
}

/// Moore–Penrose pseudo-inverse with relative cutoff `1e-12·σ_max`.
pub fn pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.is_empty() {
        return DMatrix::zeros(m.ncols(), m.nrows());
    }
    let svd = m.clone().svd(true, true);
    let cutoff = svd.singular_values.max() * 1e-12;
    svd.pseudo_inverse(cutoff).expect("both factors were computed")
}

/// Orthonormal basis (as columns) of the kernel of a full-row-rank `m`.
pub fn kernel_basis(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.ncols();
    let proj = DMatrix::identity(n, n) - pinv(m) * m;
    let eig = SymmetricEigen::new(symmetrize(&proj));
    let cols: Vec<DVector<f64>> = (0..n)
        .filter(|&i| eig.eigenvalues[i] > 0.5)
        .map(|i| eig.eigenvectors.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Matrix exponential by scaling and squaring with a degree-18 Taylor core.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = a.iter().map(|v| v.abs()).sum::<f64>().max(0.0);
    let mut s = 0;
    let mut scale = 1.0;
    while norm * scale > 0.25 {
        scale *= 0.5;
        s += 1;
    }
    let x = a * scale;
    let mut term = DMatrix::identity(n, n);
    let mut acc = DMatrix::identity(n, n);
    for k in 1..=18 {
        term = &term * &x / k as f64;
        acc += &term;
    }
    for _ in 0..s {
        acc = &acc * &acc;
    }
    acc
}

/// Standard symplectic matrix `[[0, I], [−I, 0]]` of size `2m`.
pub fn omega_std(m: usize) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        w[(i, m + i)] = 1.0;
        w[(m + i, i)] = -1.0;
    }
    w
}

/// Vertical stacking `[top; bottom]`.
pub fn vstack(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(top.ncols(), bottom.ncols());
    let mut m = DMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    m.view_mut((0, 0), top.shape()).copy_from(top);
    m.view_mut((top.nrows(), 0), bottom.shape()).copy_from(bottom);
    m
}

/// Horizontal concatenation `[left | right]`.
pub fn hstack(left: &DMatrix<f64>, right: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(left.nrows(), right.nrows());
    let mut m = DMatrix::zeros(left.nrows(), left.ncols() + right.ncols());
    m.view_mut((0, 0), left.shape()).copy_from(left);
    m.view_mut((0, left.ncols()), right.shape()).copy_from(right);
    m
}

/// Block-diagonal `diag(a, b)`.
pub fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    m.view_mut((0, 0), a.shape()).copy_from(a);
    m.view_mut(a.shape(), b.shape()).copy_from(b);
    m
}

/// Euclidean norm of a slice.
pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
