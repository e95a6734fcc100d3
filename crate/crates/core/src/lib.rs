//! Dissipativity-preserving model reduction.
//!
//! Reduces a dissipative vector field `W(x)` onto an ansatz manifold `M`
//! (given by a chart) or onto a monotone tree so that the Lyapunov function
//! `H` keeps decreasing along the reduced dynamics. The projector used is
//! the thermodynamic one: it maps `T_x(M)` identically, maps `ker dH` onto
//! `ker dH_M` metric-orthogonally, and preserves the exact value of `dH/dt`.
//!
//! All inner products are the Hessian ("Shahshahani") metric
//! `<y|z>_x = y^T Hes_x(H) z`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod counterexamples;
pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod lyapunov;
pub mod manifold;
pub mod projector;
pub mod sampling;
pub mod tree;

pub use error::{Error, Result};

pub type Vector = nalgebra::DVector<f64>;
pub type Matrix = nalgebra::DMatrix<f64>;

/// Catalog identifiers accepted by the scenario runner.
pub mod catalog {
    pub const LYAPUNOV: &[&str] = &["quadratic", "kl", "kl_shifted", "burg", "custom_f"];
    pub const CHARTS: &[&str] = &[
        "line",
        "affine",
        "polynomial",
        "parabola",
        "paraboloid",
        "convex_combination",
        "circle",
    ];
    pub const FIELDS: &[&str] = &["linear", "gradient_flow", "markov", "zero"];
    pub const TREE_ARCS: &[&str] = &["segment", "quadratic_bezier"];
    pub const POLICIES: &[&str] = &[
        "thermodynamic",
        "curve",
        "orthogonal",
        "orthogonal_euclidean",
        "custom_matrix",
    ];
}
