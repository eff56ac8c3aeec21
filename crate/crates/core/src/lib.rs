//! Physics-informed collocation solver for 2D linear elastic micromechanics
//! on square unit cells.
//!
//! The solver represents displacements and stresses with dense networks
//! whose outputs satisfy the boundary conditions by construction, and
//! trains them with full-memory BFGS on pointwise balance and constitutive
//! residuals plus a global work balance. Heterogeneous cells can be split
//! into subdomains with one network each, coupled by interface penalties.

pub mod boundary;
pub mod decomposition;
pub mod elasticity;
pub mod error;
pub mod evaluation;
pub mod exec;
pub mod experiment;
pub mod geometry;
pub mod io;
pub mod material;
pub mod netcore;
pub mod optimizer;
pub mod sampling;

pub use error::{Error, Result};
