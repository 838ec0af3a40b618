//! Geometrically graded hp discontinuous Galerkin (interior penalty)
//! discretisation of `(-Δ + r^-α) u = λ u` on `(-1/2, 1/2)^d`, `d = 2, 3`,
//! with homogeneous Dirichlet conditions imposed weakly.
//!
//! The pipeline is: [`mesh`] builds the graded cube mesh and its degree
//! distribution, [`faces`] enumerates integration faces, [`assembly`]
//! produces the stiffness-plus-penalty operator and the diagonal mass
//! matrix, [`eigen`] computes the smallest eigenpairs by shift-invert
//! Krylov iteration, and [`analysis`] measures errors against a reference
//! solution and fits exponential convergence rates. [`study`] drives whole
//! convergence studies.

pub mod analysis;
pub mod assembly;
pub mod basis;
pub mod dyadic;
pub mod eigen;
pub mod error;
pub mod faces;
pub mod mesh;
pub mod quadrature;
pub mod sparse;
pub mod study;

pub use error::{Error, Result};
