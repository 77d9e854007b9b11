use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, sym_eigenvalues, Cholesky, Matrix};

/// Solves `K v = r`, the stationarity condition of
/// `min_v 1/2 v^T K v - r^T v`, without jitter.
///
/// Applies up to three steps of iterative refinement and fails unless the
/// gradient `K v - r` ends below `1e-8 ||r||`.
pub fn solve_quadratic(k: &Matrix, r: &[f64]) -> Result<Vec<f64>> {
    if k.rows() != k.cols() || k.rows() != r.len() {
        return Err(Error::Shape(format!("{}x{} kernel against {} residuals", k.rows(), k.cols(), r.len())));
    }
    let chol = Cholesky::new(k)?;
    let mut v = chol.solve(r);
    let target = 1e-8 * norm2(r);
    let mut res = residual(k, &v, r);
    for _ in 0..3 {
        if norm2(&res) <= target {
            break;
        }
        let dv = chol.solve(&res);
        for (vi, di) in v.iter_mut().zip(&dv) {
            *vi -= di;
        }
        res = residual(k, &v, r);
    }
    let rn = norm2(&res);
    if rn > target {
        return Err(Error::Conditioning {
            message: format!("quadratic solve residual {rn:e} exceeds {target:e}"),
            jitters: vec![0.0],
        });
    }
    Ok(v)
}

fn residual(k: &Matrix, v: &[f64], r: &[f64]) -> Vec<f64> {
    (0..k.rows()).map(|i| dot(k.row(i), v) - r[i]).collect()
}

/// Objective `1/2 v^T K v - r^T v`.
pub fn quadratic_objective(k: &Matrix, r: &[f64], v: &[f64]) -> f64 {
    let kv: f64 = (0..k.rows()).map(|i| v[i] * dot(k.row(i), v)).sum();
    0.5 * kv - dot(r, v)
}

/// Kernel gradient descent on the square loss,
/// `f_{t+1} = f_t - (eta / N) K (f_t - y)`.
///
/// Returns the `(steps + 1) x N` trajectory including `f_0`. The step size
/// must satisfy `eta < 2 / lambda_max(K)`.
pub fn kernel_gradient_descent(k: &Matrix, y: &[f64], f0: &[f64], eta: f64, steps: usize) -> Result<Matrix> {
    let n = k.rows();
    if k.cols() != n || y.len() != n || f0.len() != n {
        return Err(Error::Shape("kernel, targets and initial predictions must agree in size".into()));
    }
    let lmax = sym_eigenvalues(k)?.last().copied().unwrap_or(0.0);
    let bound = if lmax > 0.0 { 2.0 / lmax } else { f64::INFINITY };
    if !(eta > 0.0 && eta < bound) {
        return Err(Error::Unstable { step: eta, bound });
    }
    let scale = eta / n as f64;
    let mut traj = Matrix::zeros(steps + 1, n);
    traj.row_mut(0).copy_from_slice(f0);
    let mut f = f0.to_vec();
    let mut e = vec![0.0; n];
    for t in 1..=steps {
        for i in 0..n {
            e[i] = f[i] - y[i];
        }
        for (i, fi) in f.iter_mut().enumerate() {
            *fi -= scale * dot(k.row(i), &e);
        }
        traj.row_mut(t).copy_from_slice(&f);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_solve() {
        let k = Matrix::diagonal(&[2.0, 2.0]);
        let v = solve_quadratic(&k, &[1.0, 1.0]).unwrap();
        assert!(v.iter().all(|x| (x - 0.5).abs() < 1e-15));
    }

    #[test]
    fn singular_kernel_fails() {
        let k = Matrix::from_fn(2, 2, |_, _| 1.0);
        assert!(matches!(solve_quadratic(&k, &[1.0, 0.0]), Err(Error::Conditioning { .. })));
    }

    #[test]
    fn stationary_at_targets() {
        let k = Matrix::diagonal(&[1.0, 3.0]);
        let y = [0.3, -0.7];
        let traj = kernel_gradient_descent(&k, &y, &y, 0.5, 10).unwrap();
        assert!((0..=10).all(|t| traj.row(t) == y));
    }

    #[test]
    fn unstable_step_rejected() {
        let k = Matrix::diagonal(&[1.0, 4.0]);
        match kernel_gradient_descent(&k, &[0.0, 0.0], &[1.0, 1.0], 0.6, 3) {
            Err(Error::Unstable { bound, .. }) => assert!((bound - 0.5).abs() < 1e-12),
            other => panic!("expected a stability error, got {other:?}"),
        }
    }
}
