//! Infinite-width ReLU kernels.
//!
//! For an NTP MLP with `L` affine layers, weight scale `nu` and bias
//! multiplier `beta`, the NNGP covariance and the NTK follow
//!
//! ```text
//! S1(x, y) = nu^2 <x, y> / m0 + beta^2
//! T1(x, y) =      <x, y> / m0 + beta^2
//! Sl       = nu^2 E[relu(u) relu(v)] + beta^2
//! Tl       =      E[relu(u) relu(v)] + beta^2 + nu^2 E[relu'(u) relu'(v)] T(l-1)
//! ```
//!
//! with `(u, v)` centred Gaussian with covariance `S(l-1)`. Both expectations
//! have arc-cosine closed forms.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};

const CLIP_SILENT: f64 = 1e-12;
const CLIP_FATAL: f64 = 1e-6;

/// Per-layer kernel values for one input pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NtkRecursionState {
    /// `Sigma^l(x, x')` for `l = 1..=L`.
    pub sigma: Vec<f64>,
    /// `Theta^l(x, x')` for `l = 1..=L`.
    pub theta: Vec<f64>,
    /// `Sigma^l(x, x)` and `Sigma^l(x', x')`.
    pub sigma_xx: Vec<f64>,
    pub sigma_yy: Vec<f64>,
    /// Cosines that left `[-1, 1]` by more than round-off and were clipped.
    pub clipped: usize,
}

impl NtkRecursionState {
    pub fn depth(&self) -> usize {
        self.sigma.len()
    }

    /// `(Sigma^L, Theta^L)`.
    pub fn last(&self) -> (f64, f64) {
        (*self.sigma.last().expect("depth >= 1"), *self.theta.last().expect("depth >= 1"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticNtk {
    pub depth: usize,
    /// Bias variance `beta^2`.
    pub beta2: f64,
    /// Weight variance `nu^2`.
    pub nu2: f64,
}

impl AnalyticNtk {
    pub fn new(depth: usize, beta2: f64) -> Self {
        Self { depth, beta2, nu2: 1.0 }
    }

    fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::Config("analytic NTK needs depth L >= 1".into()));
        }
        if !(self.beta2 >= 0.0 && self.beta2.is_finite() && self.nu2 > 0.0 && self.nu2.is_finite()) {
            return Err(Error::Config("beta^2 must be >= 0 and nu^2 > 0, both finite".into()));
        }
        Ok(())
    }

    pub fn recursion(&self, x: &[f64], y: &[f64]) -> Result<NtkRecursionState> {
        self.validate()?;
        if x.len() != y.len() || x.is_empty() {
            return Err(Error::Shape(format!("input pair of lengths {} and {}", x.len(), y.len())));
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite input to the analytic kernel".into()));
        }
        let m0 = x.len() as f64;
        let (b2, n2) = (self.beta2, self.nu2);
        let lin = |a: &[f64], b: &[f64]| dot(a, b) / m0;
        let mut s12 = n2 * lin(x, y) + b2;
        let mut s11 = n2 * lin(x, x) + b2;
        let mut s22 = n2 * lin(y, y) + b2;
        let mut t12 = lin(x, y) + b2;
        let mut st = NtkRecursionState {
            sigma: vec![s12],
            theta: vec![t12],
            sigma_xx: vec![s11],
            sigma_yy: vec![s22],
            clipped: 0,
        };
        for _ in 1..self.depth {
            let (e12, d12) = relu_expectations(s11, s22, s12, &mut st.clipped)?;
            let e11 = 0.5 * s11;
            let e22 = 0.5 * s22;
            t12 = e12 + b2 + n2 * d12 * t12;
            s12 = n2 * e12 + b2;
            s11 = n2 * e11 + b2;
            s22 = n2 * e22 + b2;
            st.sigma.push(s12);
            st.theta.push(t12);
            st.sigma_xx.push(s11);
            st.sigma_yy.push(s22);
        }
        Ok(st)
    }

    /// `(Sigma^L(x, x'), Theta^L(x, x'))`.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
        Ok(self.recursion(x, y)?.last())
    }

    /// NTK Gram matrix `Theta^L(X, X')`.
    pub fn gram(&self, x: &Matrix, y: &Matrix) -> Result<Matrix> {
        let mut k = Matrix::zeros(x.rows(), y.rows());
        for i in 0..x.rows() {
            for j in 0..y.rows() {
                k.set(i, j, self.eval(x.row(i), y.row(j))?.1);
            }
        }
        Ok(k)
    }
}

/// `E[relu(u) relu(v)]` and `E[relu'(u) relu'(v)]` for a centred Gaussian pair.
fn relu_expectations(s11: f64, s22: f64, s12: f64, clipped: &mut usize) -> Result<(f64, f64)> {
    let norm = (s11 * s22).sqrt();
    if norm == 0.0 {
        return Ok((0.0, 0.0));
    }
    let c = clip_cosine(s12 / norm, clipped)?;
    let t = c.acos();
    Ok((norm / (2.0 * PI) * (t.sin() + (PI - t) * c), (PI - t) / (2.0 * PI)))
}

fn clip_cosine(c: f64, clipped: &mut usize) -> Result<f64> {
    let excess = c.abs() - 1.0;
    if excess > CLIP_FATAL {
        return Err(Error::Numeric(format!("cosine {c} lies outside [-1, 1]")));
    }
    if excess > CLIP_SILENT {
        *clipped += 1;
    }
    Ok(c.clamp(-1.0, 1.0))
}

/// `(Sigma^L, Theta^L)` of the ReLU NTP MLP with unit weight variance.
pub fn ntk_relu_analytic(depth: usize, x: &[f64], y: &[f64], beta2: f64) -> Result<(f64, f64)> {
    AnalyticNtk::new(depth, beta2).eval(x, y)
}

/// Limiting Gram matrix of the shallow model
/// `(1/sqrt(m)) w2 . relu(W1 x)` trained in `W1` only:
/// `H(x, y) = <x, y> E[relu'(u) relu'(v)]` with `(u, v)` of covariance `[<x,x>, <x,y>; <x,y>, <y,y>]`.
pub fn shallow_ntk_gram(x: &Matrix) -> Result<Matrix> {
    let n = x.rows();
    let mut clipped = 0;
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (x.row(i), x.row(j));
            let s12 = dot(a, b);
            let (_, d) = relu_expectations(dot(a, a), dot(b, b), s12, &mut clipped)?;
            k.set(i, j, s12 * d);
        }
    }
    Ok(k)
}
