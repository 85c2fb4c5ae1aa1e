//! Numerical toolkit for normal forms around Poisson transversals.
// Tolerance tests are written as `!(r <= tol)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod equivariant;
pub mod error;
pub mod field;
pub mod linalg;
pub mod moser;

pub use error::{Error, Result};
pub mod par;
pub mod quadrature;
pub mod report;
pub mod sampling;
pub mod spray;
pub mod transversal;
