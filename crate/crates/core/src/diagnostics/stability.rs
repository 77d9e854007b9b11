use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{entk, entk_cross, EntkStrategy};
use crate::linalg::{gemm_nt, lanczos_smallest, norm2, power_spectral_norm, sym_eigenvalues, LanczosOptions, Matrix, PowerOptions};
use crate::nn::{
    forward, init_params, InitConfig, JacobianOperator, NetworkSpec, ParameterVector, Parametrization, DEFAULT_JACOBIAN_BUDGET,
};
use crate::rng;

/// The shallow model on 2-D inputs: `(1/sqrt(m)) w2 . relu(W1 x)`,
/// `W1 ~ N(0, 1)` trainable, `w2 ~ U{-1, 1}` frozen.
pub fn shallow_relu_net(m: usize, seed: u64) -> Result<(NetworkSpec, ParameterVector)> {
    let spec = NetworkSpec::shallow(2, m)?;
    let params = init_params(&spec, &InitConfig::shallow(seed))?;
    Ok((spec, params))
}

/// NTP ReLU MLP with `depth` affine layers of equal hidden width on 2-D inputs.
pub fn deep_relu_net(depth: usize, m: usize, bias: bool, seed: u64) -> Result<(NetworkSpec, ParameterVector)> {
    if depth < 2 {
        return Err(Error::Config("deep nets need at least two affine layers".into()));
    }
    let mut widths = vec![2];
    widths.extend(std::iter::repeat_n(m, depth - 1));
    widths.push(1);
    let spec = NetworkSpec::mlp(&widths, Parametrization::Ntp, bias)?;
    let params = init_params(&spec, &InitConfig::gaussian(seed))?;
    Ok((spec, params))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GramMethod {
    Dense,
    Iterative,
}

/// Smallest eigenvalue of a symmetric Gram matrix.
pub fn gram_min_eigenvalue(k: &Matrix, method: GramMethod) -> Result<f64> {
    if k.rows() != k.cols() || k.rows() == 0 {
        return Err(Error::Shape("Gram matrix must be square and non-empty".into()));
    }
    match method {
        GramMethod::Dense => Ok(sym_eigenvalues(k)?[0]),
        GramMethod::Iterative => {
            let res = lanczos_smallest(
                |x, y| {
                    for (i, yi) in y.iter_mut().enumerate() {
                        *yi = crate::linalg::dot(k.row(i), x);
                    }
                },
                k.rows(),
                &LanczosOptions::default(),
            )?;
            Ok(res.value)
        }
    }
}

/// `rho = 3 ||y - f0|| / sqrt(lambda_min)`.
pub fn stability_radius(lambda_min: f64, y: &[f64], f0: &[f64]) -> Result<f64> {
    if lambda_min.is_nan() || lambda_min <= 0.0 {
        return Err(Error::ConditionViolated(format!(
            "Gram matrix is singular (lambda_min = {lambda_min:e}); the full-row-rank condition already fails"
        )));
    }
    if y.len() != f0.len() {
        return Err(Error::Shape("targets and predictions differ in length".into()));
    }
    let r: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a - b).collect();
    Ok(radius_from_residual(lambda_min, norm2(&r)))
}

fn radius_from_residual(lambda_min: f64, residual_norm: f64) -> f64 {
    3.0 * residual_norm / lambda_min.sqrt()
}

/// Point `i` on the sphere of radius `rho` around `theta0`, direction from
/// a normalized Gaussian drawn from stream `("sphere", i)` of `seed`.
pub fn sphere_point(theta0: &[f64], rho: f64, seed: u64, i: usize) -> Result<Vec<f64>> {
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(Error::Input(format!("sphere radius {rho} must be finite and non-negative")));
    }
    if rho == 0.0 {
        return Ok(theta0.to_vec());
    }
    let mut g = rng::named_stream(seed, "sphere", &[i as u64]);
    let mut dir = vec![0.0; theta0.len()];
    rng::fill_standard_normal(&mut g, &mut dir);
    let s = rho / norm2(&dir);
    Ok(theta0.iter().zip(&dir).map(|(t, d)| t + s * d).collect())
}

pub fn sample_sphere(theta0: &[f64], rho: f64, seed: u64, k: usize) -> Result<Vec<Vec<f64>>> {
    (0..k).map(|i| sphere_point(theta0, rho, seed, i)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeviationMethod {
    /// Dense below the Jacobian budget, Gram otherwise.
    Auto,
    /// Materialized `J(theta) - J(theta0)` and its Gram spectrum.
    Dense,
    /// Power iteration with paired jvp/vjp products.
    Power,
    /// `Delta J Delta J^T` from four factored cross kernels.
    Gram,
}

/// `||J(theta) - J(theta0)||_2` on inputs `x`.
pub fn jacobian_deviation(
    spec: &NetworkSpec,
    theta: &ParameterVector,
    theta0: &ParameterVector,
    x: &Matrix,
    method: DeviationMethod,
) -> Result<f64> {
    if theta.len() != theta0.len() {
        return Err(Error::Shape("parameter vectors differ in length".into()));
    }
    let rows = x.rows() * spec.output_dim();
    let method = match method {
        DeviationMethod::Auto if rows.saturating_mul(theta.len()) <= DEFAULT_JACOBIAN_BUDGET / 2 => DeviationMethod::Dense,
        DeviationMethod::Auto => DeviationMethod::Gram,
        m => m,
    };
    match method {
        DeviationMethod::Dense => {
            let a = JacobianOperator::new(spec, theta, x)?.dense(DEFAULT_JACOBIAN_BUDGET)?;
            let b = JacobianOperator::new(spec, theta0, x)?.dense(DEFAULT_JACOBIAN_BUDGET)?;
            let mut d = a.into_vec();
            for (di, bi) in d.iter_mut().zip(b.data()) {
                *di -= bi;
            }
            let p = theta.len();
            let mut g = Matrix::zeros(rows, rows);
            gemm_nt(g.data_mut(), &d, &d, rows, p, rows, 1.0, false);
            top_singular_from_gram(&g)
        }
        DeviationMethod::Gram => {
            let k11 = entk_cross(spec, theta, x, theta, x)?;
            let k10 = entk_cross(spec, theta, x, theta0, x)?;
            let k00 = entk_cross(spec, theta0, x, theta0, x)?;
            let g = Matrix::from_fn(rows, rows, |i, j| k11.get(i, j) - k10.get(i, j) - k10.get(j, i) + k00.get(i, j));
            top_singular_from_gram(&g)
        }
        DeviationMethod::Power => {
            let a = JacobianOperator::new(spec, theta, x)?;
            let b = JacobianOperator::new(spec, theta0, x)?;
            power_spectral_norm(
                |v| Ok(diff(a.jvp(v)?, &b.jvp(v)?)),
                |u| Ok(diff(a.vjp(u)?, &b.vjp(u)?)),
                rows,
                &PowerOptions::default(),
            )
        }
        DeviationMethod::Auto => unreachable!("resolved above"),
    }
}

fn diff(mut a: Vec<f64>, b: &[f64]) -> Vec<f64> {
    for (ai, bi) in a.iter_mut().zip(b) {
        *ai -= bi;
    }
    a
}

fn top_singular_from_gram(g: &Matrix) -> Result<f64> {
    let mut g = g.clone();
    crate::kernel::entk::symmetrize(&mut g);
    let top = sym_eigenvalues(&g)?.last().copied().unwrap_or(0.0);
    Ok(top.max(0.0).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    StablePossible,
    StableViolated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub width: usize,
    pub depth: usize,
    pub num_samples: usize,
    pub lambda_min: f64,
    /// `||y - f(theta0)||_2`.
    pub residual_norm: f64,
    pub rho: f64,
    pub deviation_norms: Vec<f64>,
    pub c_prime: Vec<f64>,
    pub verdict: Verdict,
    pub init_seed: u64,
    pub perturbation_seed: u64,
    /// Smallest eigenvalue of the infinite-width Gram matrix, when computed.
    pub lambda0: Option<f64>,
}

impl StabilityReport {
    pub fn recompute_rho(&self) -> f64 {
        radius_from_residual(self.lambda_min, self.residual_norm)
    }

    pub fn max_c_prime(&self) -> f64 {
        self.c_prime.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProxyOptions {
    pub k: usize,
    pub gram: GramMethod,
    pub deviation: DeviationMethod,
}

impl Default for ProxyOptions {
    fn default() -> Self {
        Self {
            k: 5,
            gram: GramMethod::Dense,
            deviation: DeviationMethod::Auto,
        }
    }
}

/// Samples `C'(theta) = 3 ||J(theta) - J(theta0)|| / sqrt(lambda_min(G(0)))`
/// on the sphere of radius `rho` around `theta0`.
pub fn stability_proxy(
    spec: &NetworkSpec,
    theta0: &ParameterVector,
    x: &Matrix,
    y: &[f64],
    opts: &ProxyOptions,
    init_seed: u64,
    perturbation_seed: u64,
) -> Result<StabilityReport> {
    if spec.output_dim() != 1 || y.len() != x.rows() {
        return Err(Error::Shape("the stability proxy expects scalar outputs and one target per input".into()));
    }
    let g0 = entk(spec, theta0, x, None, EntkStrategy::Auto)?;
    let lambda_min = gram_min_eigenvalue(&g0.matrix, opts.gram)?;
    let f0 = forward(spec, theta0, x)?.into_vec();
    let rho = stability_radius(lambda_min, y, &f0)?;
    let residual: Vec<f64> = y.iter().zip(&f0).map(|(a, b)| a - b).collect();
    let residual_norm = norm2(&residual);
    let mut deviation_norms = Vec::with_capacity(opts.k);
    let mut c_prime = Vec::with_capacity(opts.k);
    for i in 0..opts.k {
        let theta = theta0.with_values(sphere_point(theta0.values(), rho, perturbation_seed, i)?)?;
        let dev = jacobian_deviation(spec, &theta, theta0, x, opts.deviation)?;
        deviation_norms.push(dev);
        c_prime.push(3.0 * dev / lambda_min.sqrt());
    }
    let verdict = if c_prime.iter().any(|&c| c > 0.5) {
        Verdict::StableViolated
    } else {
        Verdict::StablePossible
    };
    Ok(StabilityReport {
        width: spec.min_hidden_width(),
        depth: spec.depth(),
        num_samples: x.rows(),
        lambda_min,
        residual_norm,
        rho,
        deviation_norms,
        c_prime,
        verdict,
        init_seed,
        perturbation_seed,
        lambda0: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radius_arithmetic() {
        assert_eq!(stability_radius(9.0, &[1.0], &[0.0]).unwrap(), 1.0);
        assert_eq!(stability_radius(4.0, &[0.3, 0.2], &[0.3, 0.2]).unwrap(), 0.0);
        assert!(matches!(stability_radius(0.0, &[1.0], &[0.0]), Err(Error::ConditionViolated(_))));
    }

    #[test]
    fn sphere_points_have_exact_radius() {
        let theta0: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        for p in sample_sphere(&theta0, 2.5, 7, 5).unwrap() {
            let d: Vec<f64> = p.iter().zip(&theta0).map(|(a, b)| a - b).collect();
            assert!((norm2(&d) - 2.5).abs() < 1e-12);
        }
        assert!(sample_sphere(&theta0, 0.0, 7, 3).unwrap().iter().all(|p| p == &theta0));
    }

    #[test]
    fn gram_eigenvalue_examples() {
        assert!((gram_min_eigenvalue(&Matrix::identity(16), GramMethod::Dense).unwrap() - 1.0).abs() < 1e-15);
        let d = Matrix::diagonal(&[3.0, 1e-4]);
        for m in [GramMethod::Dense, GramMethod::Iterative] {
            assert!((gram_min_eigenvalue(&d, m).unwrap() - 1e-4).abs() < 1e-12);
        }
    }

    #[test]
    fn deviation_vanishes_at_expansion_point() {
        let (spec, p) = shallow_relu_net(32, 0).unwrap();
        let x = Matrix::from_rows(&[vec![0.6, 0.8], vec![1.0, 0.0]]).unwrap();
        for m in [DeviationMethod::Dense, DeviationMethod::Gram, DeviationMethod::Power] {
            assert_eq!(jacobian_deviation(&spec, &p, &p, &x, m).unwrap(), 0.0);
        }
    }

    #[test]
    fn linear_model_has_stable_jacobian() {
        let spec = NetworkSpec::linear(2, 1).unwrap();
        let p = init_params(&spec, &InitConfig::gaussian(0)).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let r = stability_proxy(&spec, &p, &x, &[1.0, -1.0], &ProxyOptions::default(), 0, 1).unwrap();
        assert!(r.c_prime.iter().all(|&c| c == 0.0));
        assert_eq!(r.verdict, Verdict::StablePossible);
    }
}
