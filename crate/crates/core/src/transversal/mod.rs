//! Poisson transversals, the conormal chart and the local model around them.

pub mod data;
pub mod embedding;
pub mod model;
pub mod pullback;

pub use data::{check_transversal, Criteria, Frames, TransversalData};
pub use embedding::Embedding;
pub use model::{
    conormal_chart, local_model_bivector, local_model_from, sigma_tilde, sigma_tilde_eval, verify_normal_form,
    ConormalChart, Discretization, NormalFormOptions, SigmaEval,
};
pub use pullback::{check_pullback_transversal, ExpressionMap, PullbackOptions};
