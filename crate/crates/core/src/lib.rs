//! Mean-field variational inference for Gaussian mixtures.
//!
//! The crate covers the full chain from a cut-off mixture posterior to its
//! effective free-energy landscape:
//!
//! * [`model`] — domain types, synthetic data, the cut-off log-posterior and
//!   its scaled potential;
//! * [`spd`] — affine-invariant geometry on positive definite matrices and a
//!   numerical geodesic-convexity scan;
//! * [`mean_field`] — coordinate-ascent solver for the factorized
//!   approximation, Laplace machinery, and the small-N marginal partition
//!   function;
//! * [`landscape`] — averaged potentials over confusion-matrix classes,
//!   entropy counting, and lattice sweeps of the free energy;
//! * [`univariate`] — closed-form stationary equations for one-dimensional
//!   data, the fast path and cross-check for the landscape solver;
//! * [`harness`] — experiment configs, scenario dispatch, and reports.

pub mod error;
pub mod harness;
pub mod landscape;
pub mod linalg;
pub mod mean_field;
pub mod model;
pub mod numerics;
pub mod optim;
pub mod rng;
pub mod spd;
pub mod univariate;

pub use error::{Error, Result};
