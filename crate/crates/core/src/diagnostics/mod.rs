//! Preconditions for fast natural-gradient convergence: Gram positivity at
//! initialization and Jacobian stability on the sphere of radius `rho`.

pub mod problem;
pub mod stability;
pub mod sweep;

pub use problem::{synthetic_problem, synthetic_problem_with, ProblemOptions, SyntheticProblem};
pub use stability::{
    deep_relu_net, gram_min_eigenvalue, jacobian_deviation, sample_sphere, shallow_relu_net, sphere_point, stability_proxy,
    stability_radius, DeviationMethod, GramMethod, ProxyOptions, StabilityReport, Verdict,
};
pub use sweep::{analytic_lambda0, cell_lambda_min, long_format, run_cell, width_sweep, LongRow, SweepCell, SweepConfig};
