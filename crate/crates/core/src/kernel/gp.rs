use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_jitter, dot, Cholesky, JitterPolicy, Matrix};

/// Factorization record kept for manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JitterRecord {
    /// Absolute jitter added to the diagonal on top of the noise.
    pub applied: f64,
    pub attempts: Vec<f64>,
}

/// Kernel regression posterior conditioned on training residuals
/// `r = y - f0(X)`:
///
/// ```text
/// mean(x)    = f0(x) + K(x, X) (K + s2 I)^{-1} r
/// cov(x, x') = K(x, x') - K(x, X) (K + s2 I)^{-1} K(X, x')
/// ```
#[derive(Clone, Debug)]
pub struct GpPosterior {
    chol: Cholesky,
    alpha: Vec<f64>,
    residual: Vec<f64>,
    noise: f64,
    jitter: JitterRecord,
}

/// Conditions on `K_train`, targets `y` and the prior mean `f0` at the
/// training points. `noise` may be zero; escalating jitter is applied when
/// the factorization fails.
pub fn gp_posterior(k_train: &Matrix, y: &[f64], f0: &[f64], noise: f64, policy: &JitterPolicy) -> Result<GpPosterior> {
    let n = k_train.rows();
    if k_train.cols() != n {
        return Err(Error::Shape("training kernel must be square".into()));
    }
    if y.len() != n || f0.len() != n {
        return Err(Error::Shape(format!("expected {n} targets and prior means, got {} and {}", y.len(), f0.len())));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::Config(format!("observation noise {noise} must be finite and non-negative")));
    }
    if !k_train.is_finite() || y.iter().chain(f0).any(|v| !v.is_finite()) {
        return Err(Error::Input("non-finite kernel or targets".into()));
    }
    let scale = k_train.data().iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    if k_train.asymmetry() > 1e-10 * scale {
        return Err(Error::Input("training kernel is not symmetric".into()));
    }
    let f = cholesky_with_jitter(k_train, noise, policy)?;
    let residual: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a - b).collect();
    let alpha = f.chol.solve(&residual);
    Ok(GpPosterior {
        chol: f.chol,
        alpha,
        residual,
        noise,
        jitter: JitterRecord {
            applied: f.jitter,
            attempts: f.attempts,
        },
    })
}

impl GpPosterior {
    pub fn num_train(&self) -> usize {
        self.alpha.len()
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn jitter(&self) -> &JitterRecord {
        &self.jitter
    }

    pub fn residual(&self) -> &[f64] {
        &self.residual
    }

    /// Representer weights `(K + s2 I)^{-1} r`.
    pub fn weights(&self) -> &[f64] {
        &self.alpha
    }

    fn check_cross(&self, k: &Matrix) -> Result<()> {
        if k.cols() != self.num_train() {
            return Err(Error::Shape(format!(
                "cross kernel has {} columns, posterior has {} training points",
                k.cols(),
                self.num_train()
            )));
        }
        Ok(())
    }

    /// Posterior mean at test points given `K(X*, X)` and `f0(X*)`.
    pub fn mean(&self, k_test_train: &Matrix, f0_test: &[f64]) -> Result<Vec<f64>> {
        self.check_cross(k_test_train)?;
        if f0_test.len() != k_test_train.rows() {
            return Err(Error::Shape("one prior mean per test point required".into()));
        }
        Ok((0..k_test_train.rows())
            .map(|i| f0_test[i] + dot(k_test_train.row(i), &self.alpha))
            .collect())
    }

    /// Posterior covariance between two test sets.
    pub fn cov(&self, k_a_train: &Matrix, k_b_train: &Matrix, k_ab: &Matrix) -> Result<Matrix> {
        self.check_cross(k_a_train)?;
        self.check_cross(k_b_train)?;
        if k_ab.rows() != k_a_train.rows() || k_ab.cols() != k_b_train.rows() {
            return Err(Error::Shape("prior covariance block has the wrong shape".into()));
        }
        let va = self.chol.solve_lower_matrix(&k_a_train.transpose());
        let vb = self.chol.solve_lower_matrix(&k_b_train.transpose());
        let reduction = va.transpose().matmul(&vb)?;
        let mut out = k_ab.clone();
        for (o, r) in out.data_mut().iter_mut().zip(reduction.data()) {
            *o -= r;
        }
        Ok(out)
    }

    /// Posterior variances given `K(X*, X)` and the prior variances `K(x*, x*)`.
    pub fn variance(&self, k_test_train: &Matrix, k_test_diag: &[f64]) -> Result<Vec<f64>> {
        self.check_cross(k_test_train)?;
        if k_test_diag.len() != k_test_train.rows() {
            return Err(Error::Shape("one prior variance per test point required".into()));
        }
        Ok((0..k_test_train.rows())
            .map(|i| {
                let v = self.chol.solve_lower(k_test_train.row(i));
                (k_test_diag[i] - dot(&v, &v)).max(0.0)
            })
            .collect())
    }
}
