//! Square roots and the `b_ω` map, group averaging, equivariant
//! trivializations, invariant sprays and the splitting pipeline.

mod group;
mod invariant;
mod split;
mod sqrt;

pub use group::{
    average_intertwiner, equivariant_trivialization, trivialization_residuals, EquivariantBundle, GroupAction,
    GroupKind, CIRCLE_NODES, CLOSURE_TOL, POISSON_ACTION_TOL,
};
pub use invariant::{
    cotangent_lift, induced_linear_action, invariant_spray, invariant_transversal, leaf_tangent,
    spray_equivariance_residual, RANK_THRESHOLD,
};
pub use split::{darboux_basis, ConormalBundle, weinstein_split, SplitOptions, Splitting};
pub use sqrt::{b_map, b_map_trials, cut_distance, principal_sqrt, SymplecticPair, CUT_DISTANCE};
