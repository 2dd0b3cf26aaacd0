//! Estimation of positive-definite Hermitian Toeplitz covariance matrices from
//! i.i.d. circular complex Gaussian snapshots.
//!
//! The crate bundles the estimators compared in the accompanying experiments:
//!
//! - redundancy (diagonal) averaging of the sample covariance, with
//!   diagonal-loading rectification ([`toeplitzify`]),
//! - consistent random-matrix eigenvalue correction ([`rmt`]),
//! - alternating phase/modulus Newton refinement toward prescribed
//!   eigenvalues ([`toiep`]),
//! - reconstruction of the Toeplitz matrix sharing the sample's maximum
//!   entropy spectrum ([`mespec`]),
//!
//! together with sphericity likelihood-ratio quality metrics ([`likelihood`])
//! and a seeded Monte Carlo harness ([`harness`]).

pub mod error;
pub mod harness;
pub mod likelihood;
pub mod mespec;
pub mod models;
pub mod numerics;
pub mod rmt;
pub mod sampling;
pub mod toeplitzify;
pub mod toiep;

pub use error::{Error, Result};
pub use numerics::{ComplexMatrix, EigenDecomposition, HermitianMatrix, C64};
