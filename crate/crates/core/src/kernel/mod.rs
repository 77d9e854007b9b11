//! Empirical and analytic NTKs, kernel regression and kernel gradient flow.

pub mod analytic;
pub mod entk;
pub mod flow;
pub mod gp;
pub mod linearize;

pub use analytic::{ntk_relu_analytic, shallow_ntk_gram, AnalyticNtk, NtkRecursionState};
pub use entk::{entk, entk_cross, EntkStrategy, KernelFeatures, KernelMatrix, Provenance};
pub use flow::{kernel_gradient_descent, quadratic_objective, solve_quadratic};
pub use gp::{gp_posterior, GpPosterior, JitterRecord};
pub use linearize::{linearize, LinearizedNetwork};
