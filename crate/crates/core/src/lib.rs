//! Numerical construction of Baxter Q-operators for the higher-spin
//! eight-vertex model built from spin-`l` representations of the Sklyanin
//! algebra on an even number of sites.
//!
//! The crate is organised bottom-up:
//!
//! - [`theta`]: Jacobi theta functions `θ_ab(z, τ)` and bracket products.
//! - [`numerics`]: dense complex linear algebra, periodic quadrature and
//!   argument-principle zero finding.
//! - [`representation`]: the `(2l+1)`-dimensional theta-function space, the
//!   generators `S^a` as matrices, and the involutions `U_a`.
//! - [`sklyanin`]: the Sklyanin inner product, Gram matrices, and the closed
//!   forms for elliptic binomials, 6j-symbols and pairings.
//! - [`lattice`]: L-operators, the R-matrix, transfer matrices, gauge
//!   matrices and local pseudo-vacua.
//! - [`qop`]: `Q_R`, `Q_L` and `Q`.
//! - [`spectra`]: symmetry sectors, joint eigenvectors and Bethe roots.

pub mod error;
pub mod lattice;
pub mod numerics;
pub mod qop;
pub mod representation;
pub mod sklyanin;
pub mod spectra;
pub mod theta;

pub use error::{QopError, Result};
pub use numerics::DenseMatrix;
pub use theta::{ModelParams, ThetaChar, C64};
