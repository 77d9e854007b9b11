//! Linearized Laplace posterior with an exact Gauss-Newton curvature
//! `G = J^T J` (squared loss), prior `N(0, 1/lambda)` and noise `s2`.
//!
//! Two algebraically identical forms are available: the weight-space form
//! factors `H = G / s2 + lambda I` (`P x P`), the kernel form factors
//! `K + lambda s2 I` with `K = J J^T` (`N x N`) and uses
//!
//! ```text
//! var(z)      = (k(z, z) - k(z, X) (K + lambda s2 I)^{-1} k(X, z)) / lambda
//! log det H   = P log lambda + log det(I + K / (lambda s2))
//! ```

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelFeatures;
use crate::linalg::{dot, gemm_tn, sym_eigenvalues, Cholesky, Matrix};
use crate::nn::{forward, JacobianOperator, NetworkSpec, ParameterVector, DEFAULT_JACOBIAN_BUDGET};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LaplaceForm {
    /// Weight space when `P <= N`, kernel form otherwise.
    Auto,
    Weight,
    Kernel,
}

#[derive(Clone, Debug)]
enum Curvature {
    /// `G = J^T J`.
    Weight { g: Matrix },
    /// `K = J J^T` and the features of the observations.
    Kernel { k: Matrix, features: Option<KernelFeatures> },
}

#[derive(Clone, Debug)]
pub struct LaplacePosterior {
    spec: NetworkSpec,
    theta: ParameterVector,
    y: Vec<f64>,
    prior_precision: f64,
    noise: f64,
    curvature: Curvature,
    chol: Option<Cholesky>,
    /// Eigenvalues of `G` (or `K`), computed on demand.
    spectrum: std::sync::OnceLock<Vec<f64>>,
    sse: f64,
}

fn check_hyper(prior_precision: f64, noise: f64) -> Result<()> {
    if !(prior_precision > 0.0 && prior_precision.is_finite()) {
        return Err(Error::Config(format!("prior precision {prior_precision} must be positive")));
    }
    if !(noise > 0.0 && noise.is_finite()) {
        return Err(Error::Config(format!("observation noise {noise} must be positive")));
    }
    Ok(())
}

/// Fits the posterior at `theta` on observations `(x, y)` (scalar outputs).
pub fn fit_laplace(
    spec: &NetworkSpec,
    theta: &ParameterVector,
    x: &Matrix,
    y: &[f64],
    prior_precision: f64,
    noise: f64,
    form: LaplaceForm,
) -> Result<LaplacePosterior> {
    check_hyper(prior_precision, noise)?;
    if spec.output_dim() != 1 {
        return Err(Error::Shape("the Laplace surrogate expects a scalar output".into()));
    }
    if x.rows() != y.len() {
        return Err(Error::Shape("one target per observation required".into()));
    }
    if x.cols() != spec.input_dim() {
        return Err(Error::Shape(format!("observations have {} features, network expects {}", x.cols(), spec.input_dim())));
    }
    let n = x.rows();
    let p = theta.len();
    let weight = match form {
        LaplaceForm::Weight => true,
        LaplaceForm::Kernel => false,
        LaplaceForm::Auto => p <= n,
    };
    let (curvature, sse) = if n == 0 {
        let c = if weight { Curvature::Weight { g: Matrix::zeros(p, p) } } else { Curvature::Kernel { k: Matrix::zeros(0, 0), features: None } };
        (c, 0.0)
    } else {
        let f = forward(spec, theta, x)?;
        let sse = f.data().iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        let c = if weight {
            let j = JacobianOperator::new(spec, theta, x)?.dense(DEFAULT_JACOBIAN_BUDGET)?;
            let mut g = Matrix::zeros(p, p);
            gemm_tn(g.data_mut(), j.data(), j.data(), p, n, p, 1.0, false);
            crate::kernel::entk::symmetrize(&mut g);
            Curvature::Weight { g }
        } else {
            let features = KernelFeatures::new(spec, theta, x)?;
            let mut k = features.cross(&features);
            crate::kernel::entk::symmetrize(&mut k);
            Curvature::Kernel { k, features: Some(features) }
        };
        (c, sse)
    };
    let mut post = LaplacePosterior {
        spec: spec.clone(),
        theta: theta.clone(),
        y: y.to_vec(),
        prior_precision,
        noise,
        curvature,
        chol: None,
        spectrum: std::sync::OnceLock::new(),
        sse,
    };
    post.factorize()?;
    Ok(post)
}

impl LaplacePosterior {
    fn factorize(&mut self) -> Result<()> {
        let (lam, s2) = (self.prior_precision, self.noise);
        let m = match &self.curvature {
            Curvature::Weight { g } => {
                let mut h = g.clone();
                for v in h.data_mut().iter_mut() {
                    *v /= s2;
                }
                for i in 0..h.rows() {
                    let d = h.get(i, i) + lam;
                    h.set(i, i, d);
                }
                h
            }
            Curvature::Kernel { k, .. } => {
                let mut a = k.clone();
                for i in 0..a.rows() {
                    let d = a.get(i, i) + lam * s2;
                    a.set(i, i, d);
                }
                a
            }
        };
        self.chol = if m.rows() == 0 { None } else { Some(Cholesky::new(&m)?) };
        Ok(())
    }

    pub fn prior_precision(&self) -> f64 {
        self.prior_precision
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn num_observations(&self) -> usize {
        self.y.len()
    }

    pub fn theta(&self) -> &ParameterVector {
        &self.theta
    }

    pub fn is_weight_form(&self) -> bool {
        matches!(self.curvature, Curvature::Weight { .. })
    }

    /// Same curvature, new prior precision.
    pub fn with_prior_precision(&self, prior_precision: f64) -> Result<Self> {
        self.with_hyperparameters(prior_precision, self.noise)
    }

    /// Same curvature, new prior precision and observation noise.
    pub fn with_hyperparameters(&self, prior_precision: f64, noise: f64) -> Result<Self> {
        check_hyper(prior_precision, noise)?;
        let mut out = self.clone();
        out.prior_precision = prior_precision;
        out.noise = noise;
        out.factorize()?;
        Ok(out)
    }

    /// Eigenvalues of `G` (equivalently the non-zero spectrum of `K`).
    pub fn curvature_spectrum(&self) -> Result<&[f64]> {
        if let Some(s) = self.spectrum.get() {
            return Ok(s);
        }
        let m = match &self.curvature {
            Curvature::Weight { g } => g,
            Curvature::Kernel { k, .. } => k,
        };
        let eig = if m.rows() == 0 { Vec::new() } else { sym_eigenvalues(m)? };
        let eig = eig.into_iter().map(|v| v.max(0.0)).collect();
        Ok(self.spectrum.get_or_init(|| eig))
    }

    /// Network outputs at `theta`.
    pub fn mean(&self, z: &Matrix) -> Result<Vec<f64>> {
        Ok(forward(&self.spec, &self.theta, z)?.into_vec())
    }

    /// `J(z) H^{-1} J(z)^T` for each row of `z`.
    pub fn predictive_variance(&self, z: &Matrix) -> Result<Vec<f64>> {
        let lam = self.prior_precision;
        match &self.curvature {
            Curvature::Weight { .. } => {
                let jz = JacobianOperator::new(&self.spec, &self.theta, z)?.dense(DEFAULT_JACOBIAN_BUDGET)?;
                let chol = self.chol.as_ref().expect("weight form always factors");
                Ok((0..z.rows())
                    .map(|i| {
                        let v = chol.solve_lower(jz.row(i));
                        dot(&v, &v)
                    })
                    .collect())
            }
            Curvature::Kernel { features, .. } => {
                let fz = KernelFeatures::new(&self.spec, &self.theta, z)?;
                let kzz = fz.diag();
                let (Some(chol), Some(fx)) = (&self.chol, features) else {
                    return Ok(kzz.iter().map(|k| k / lam).collect());
                };
                let kzx = fz.cross(fx);
                Ok((0..z.rows())
                    .map(|i| {
                        let v = chol.solve_lower(kzx.row(i));
                        ((kzz[i] - dot(&v, &v)) / lam).max(0.0)
                    })
                    .collect())
            }
        }
    }

    /// Gaussian log-likelihood of the observations at `theta`.
    pub fn log_likelihood(&self) -> f64 {
        let n = self.y.len() as f64;
        -0.5 * n * (2.0 * PI * self.noise).ln() - self.sse / (2.0 * self.noise)
    }

    /// Laplace evidence
    /// `log p(D | theta) + log p(theta) + P/2 log(2 pi) - 1/2 log det H`.
    pub fn log_marginal_likelihood(&self) -> Result<f64> {
        self.evidence_at(self.prior_precision)
    }

    /// Evidence at another prior precision, curvature and `theta` held fixed.
    pub fn evidence_at(&self, prior_precision: f64) -> Result<f64> {
        check_hyper(prior_precision, self.noise)?;
        let theta_sq = dot(self.theta.values(), self.theta.values());
        let s2 = self.noise;
        let logdet_ratio: f64 = self
            .curvature_spectrum()?
            .iter()
            .map(|&mu| (1.0 + mu / (prior_precision * s2)).ln())
            .sum();
        let ev = self.log_likelihood() - 0.5 * prior_precision * theta_sq - 0.5 * logdet_ratio;
        if !ev.is_finite() {
            return Err(Error::Conditioning {
                message: format!("non-finite evidence at prior precision {prior_precision:e}"),
                jitters: Vec::new(),
            });
        }
        Ok(ev)
    }

    /// Effective number of parameters `sum mu / (mu + lambda s2)`.
    pub fn effective_parameters(&self, prior_precision: f64) -> Result<f64> {
        let s2 = self.noise;
        Ok(self.curvature_spectrum()?.iter().map(|&mu| mu / (mu + prior_precision * s2)).sum())
    }

    /// `log det(I + K / (lambda s2))` as used by kernel-regime confidence bounds.
    pub fn log_det_ratio(&self, scale: f64) -> Result<f64> {
        Ok(self.curvature_spectrum()?.iter().map(|&mu| (1.0 + mu / scale).ln()).sum())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TuneMode {
    /// Grid over `log10 lambda` plus golden-section refinement.
    Posthoc { grid: Vec<f64>, refine: bool },
    /// One evidence fixed-point step `lambda <- gamma_eff / ||theta||^2`.
    Online,
}

impl TuneMode {
    /// 25 points on `log10 lambda in [-6, 6]` with refinement.
    pub fn posthoc() -> Self {
        TuneMode::Posthoc {
            grid: (0..25).map(|i| -6.0 + 0.5 * i as f64).collect(),
            refine: true,
        }
    }
}

/// Tuned prior precision. `new_observations == 0` leaves an online
/// estimate unchanged.
pub fn tune_prior_precision(post: &LaplacePosterior, mode: &TuneMode, new_observations: usize) -> Result<f64> {
    match mode {
        TuneMode::Online => {
            if new_observations == 0 || post.num_observations() == 0 {
                return Ok(post.prior_precision);
            }
            let theta_sq = dot(post.theta.values(), post.theta.values());
            let gamma = post.effective_parameters(post.prior_precision)?;
            let next = gamma / theta_sq;
            if !(next.is_finite() && next > 0.0) {
                return Err(Error::Calibration(format!("online update produced lambda = {next}")));
            }
            Ok(next.clamp(1e-6, 1e6))
        }
        TuneMode::Posthoc { grid, refine } => {
            if grid.is_empty() {
                return Err(Error::Config("posthoc grid is empty".into()));
            }
            let scores: Vec<Option<f64>> = grid.iter().map(|&g| post.evidence_at(10f64.powf(g)).ok()).collect();
            let best = scores
                .iter()
                .enumerate()
                .filter_map(|(i, s)| s.map(|v| (i, v)))
                .fold(None::<(usize, f64)>, |acc, (i, v)| match acc {
                    Some((_, bv)) if bv >= v => acc,
                    _ => Some((i, v)),
                })
                .ok_or_else(|| Error::Calibration("evidence is non-finite for every candidate".into()))?;
            let i = best.0;
            if !refine || grid.len() == 1 {
                return Ok(10f64.powf(grid[i]));
            }
            let lo = grid[i.saturating_sub(1)];
            let hi = grid[(i + 1).min(grid.len() - 1)];
            let f = |g: f64| post.evidence_at(10f64.powf(g)).unwrap_or(f64::NEG_INFINITY);
            let g = golden_section_max(f, lo.min(hi), lo.max(hi), 1e-6);
            Ok(if f(g) >= best.1 { 10f64.powf(g) } else { 10f64.powf(grid[i]) })
        }
    }
}

/// Evidence fixed point for the noise, `s2 <- SSE / (N - gamma_eff)`, at
/// the current hyperparameters. Returns the current noise without data.
pub fn update_noise(post: &LaplacePosterior) -> Result<f64> {
    let n = post.num_observations() as f64;
    if n == 0.0 {
        return Ok(post.noise);
    }
    let gamma = post.effective_parameters(post.prior_precision)?;
    let next = post.sse / (n - gamma).max(1.0);
    if !next.is_finite() {
        return Err(Error::Calibration(format!("noise update produced {next}")));
    }
    Ok(next.clamp(1e-4, 1e4))
}

fn golden_section_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_params, InitConfig};

    fn linear_setup() -> (NetworkSpec, ParameterVector, Matrix, Vec<f64>) {
        let spec = NetworkSpec::linear(2, 1).unwrap();
        let theta = ParameterVector::new(&spec, vec![0.3, -0.2], vec![]).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 0.5], vec![-0.3, 2.0], vec![0.7, 0.7]]).unwrap();
        (spec, theta, x, vec![0.4, -0.1, 0.9])
    }

    #[test]
    fn forms_agree() {
        let (spec, theta, x, y) = linear_setup();
        let w = fit_laplace(&spec, &theta, &x, &y, 0.7, 0.5, LaplaceForm::Weight).unwrap();
        let k = fit_laplace(&spec, &theta, &x, &y, 0.7, 0.5, LaplaceForm::Kernel).unwrap();
        let z = Matrix::from_rows(&[vec![0.2, -1.0], vec![3.0, 0.1]]).unwrap();
        for (a, b) in w.predictive_variance(&z).unwrap().iter().zip(k.predictive_variance(&z).unwrap()) {
            assert!((a - b).abs() < 1e-12);
        }
        let (ea, eb) = (w.log_marginal_likelihood().unwrap(), k.log_marginal_likelihood().unwrap());
        assert!((ea - eb).abs() < 1e-10);
    }

    #[test]
    fn prior_only_variance() {
        let spec = NetworkSpec::mlp(&[3, 5, 1], crate::nn::Parametrization::Sp, true).unwrap();
        let theta = init_params(&spec, &InitConfig::gaussian(0)).unwrap();
        let post = fit_laplace(&spec, &theta, &Matrix::zeros(0, 3), &[], 4.0, 1.0, LaplaceForm::Kernel).unwrap();
        let z = Matrix::from_rows(&[vec![0.5, -1.0, 2.0]]).unwrap();
        let j = crate::nn::jacobian(&spec, &theta, &z, 1 << 20).unwrap();
        let var = post.predictive_variance(&z).unwrap()[0];
        assert!((var - dot(j.row(0), j.row(0)) / 4.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_grid_and_empty_online_update() {
        let (spec, theta, x, y) = linear_setup();
        let post = fit_laplace(&spec, &theta, &x, &y, 2.0, 1.0, LaplaceForm::Auto).unwrap();
        let one = TuneMode::Posthoc {
            grid: vec![0.5],
            refine: true,
        };
        assert_eq!(tune_prior_precision(&post, &one, 3).unwrap(), 10f64.powf(0.5));
        assert_eq!(tune_prior_precision(&post, &TuneMode::Online, 0).unwrap(), 2.0);
    }

    #[test]
    fn golden_section_finds_peak() {
        let g = golden_section_max(|x| -(x - 1.3).powi(2), -2.0, 4.0, 1e-9);
        assert!((g - 1.3).abs() < 1e-6);
    }
}
