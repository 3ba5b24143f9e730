//! Joint spectral radius toolkit built around the invariant polytope algorithm.
//!
//! Given a finite family of real d x d matrices, the crate searches for a
//! dominant (spectrum-maximizing) product, grows an invariant convex body for
//! the normalized family, and derives from it
//!
//! * an exact value of the joint spectral radius together with a certificate,
//! * an extremal (Barabanov) norm, piecewise linear or piecewise quadratic,
//! * growth classification of individual switching laws, and
//! * a monotone variant specialised to nonnegative families.
//!
//! Modules follow the pipeline: [`linalg`] (matrices, eigenpairs, words),
//! [`feasibility`] (LP membership oracles), [`search`] (candidate products),
//! [`polytope`] (the invariant body iteration), [`multi`] (several candidates,
//! balancing), [`norm`] (Barabanov norms), [`positive`] (nonnegative variant),
//! [`trajectory`] (switching-law classification and simulation), and [`cli`]
//! (file formats and subcommand drivers used by the `jsrkit` binary).

pub mod cli;
pub mod feasibility;
pub mod linalg;
pub mod multi;
pub mod norm;
pub mod polytope;
pub mod positive;
pub mod render;
pub mod search;
pub mod trajectory;

pub use linalg::{Matrix, MatrixFamily, Word};
pub use polytope::{InvariantBody, RunOutcome};
