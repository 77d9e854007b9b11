use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm2, Matrix};
use crate::rng;

/// Regression problem `y = sin(2 pi (x1 + x2)) + noise * eps` with unit-norm inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticProblem {
    /// `N x 2`, rows normalized to unit length.
    pub x: Matrix,
    pub y: Vec<f64>,
    /// Standard-normal draws `eps_n`.
    pub eps: Vec<f64>,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemOptions {
    pub n: usize,
    pub seed: u64,
    pub noise: f64,
    /// Compute targets from the raw inputs (true) or the normalized ones.
    pub targets_before_normalization: bool,
}

impl ProblemOptions {
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            seed,
            noise: 0.1,
            targets_before_normalization: true,
        }
    }
}

pub fn synthetic_problem(n: usize, seed: u64) -> Result<SyntheticProblem> {
    synthetic_problem_with(&ProblemOptions::new(n, seed))
}

/// Draws all `2N` uniforms first, then the `N` noise values, from the
/// `"problem"` stream of `seed`.
pub fn synthetic_problem_with(opts: &ProblemOptions) -> Result<SyntheticProblem> {
    if opts.n == 0 {
        return Err(Error::Config("the synthetic problem needs N >= 1".into()));
    }
    let mut rng = rng::named_stream(opts.seed, "problem", &[]);
    let raw: Vec<[f64; 2]> = (0..opts.n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
    let eps: Vec<f64> = (0..opts.n).map(|_| rng::standard_normal(&mut rng)).collect();
    let normalized: Vec<[f64; 2]> = raw
        .iter()
        .map(|p| {
            let r = norm2(p);
            [p[0] / r, p[1] / r]
        })
        .collect();
    let basis = if opts.targets_before_normalization { &raw } else { &normalized };
    let y = basis
        .iter()
        .zip(&eps)
        .map(|(p, e)| (2.0 * PI * (p[0] + p[1])).sin() + opts.noise * e)
        .collect();
    let x = Matrix::from_vec(opts.n, 2, normalized.concat())?;
    Ok(SyntheticProblem {
        x,
        y,
        eps,
        seed: opts.seed,
    })
}
