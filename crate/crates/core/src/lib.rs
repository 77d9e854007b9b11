//! Neural tangent kernel laboratory.
//!
//! Empirical and analytic NTKs, NTK-GP regression, fast-convergence
//! diagnostics for natural gradient descent, eNTK-Laplace neural bandits and
//! continual-learning forgetting metrics, on desk-scale MLPs.

pub mod bandit;
pub mod continual;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod kernel;
pub mod linalg;
pub mod nn;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
