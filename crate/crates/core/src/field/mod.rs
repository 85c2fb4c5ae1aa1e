//! Fields on a single coordinate chart and their pointwise calculus.

pub mod calculus;
pub mod chart;
pub mod dirac;
pub mod expr;
pub mod fields;
pub mod jet;

pub use calculus::{
    exterior_derivative_numeric, gauge_bivector, gauge_matrix, jacobiator, jacobiator_fd, sharp,
    Alternating3,
};
pub use chart::ChartBox;
pub use dirac::{dirac_gauge, dirac_graph, dirac_pullback, dirac_to_bivector, DiracFrame};
pub use expr::{Expr, Program};
pub use fields::{BivectorField, ExpressionField, Jet, OneFormField, TwoFormField};
