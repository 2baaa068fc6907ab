//! Robust adaptive beamforming by regularized least squares.
//!
//! The Capon/MVDR beamformer output `w^H y` can be rewritten as the scaled
//! inner product `b^H z / (b^H b)` of two vectors that solve ill-conditioned
//! linear systems driven by the covariance square root. This crate estimates
//! both vectors with regularized least squares and picks each regularization
//! parameter as the root of a secular equation built from the eigenvalue
//! structure of the sample covariance (the COPRA selector).
//!
//! Module map:
//!
//! * [`linalg`]: dense complex arithmetic and the Hermitian eigensolver.
//! * [`array`]: uniform linear array model, scenario draws and covariances.
//! * [`secular`]: eigenvalue splitting, the secular function and its solver.
//! * [`beamformer`]: weight computation for every method under test.
//! * [`harness`]: SINR metric and the seeded Monte-Carlo engine.

pub mod array;
pub mod beamformer;
mod error;
pub mod harness;
pub mod linalg;
pub mod secular;

pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector, HermitianEigensystem};
pub use num_complex::Complex64;
