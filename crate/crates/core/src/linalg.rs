//! Dense row-major matrices and the handful of solvers the crate needs.
//!
//! Products and factorizations are delegated to `faer` (always sequential, so
//! results are bit-stable for a fixed build). The matrix-free solvers
//! (Lanczos, power iteration) are implemented here.

use faer::linalg::matmul::matmul;
use faer::linalg::triangular_solve;
use faer::{Accum, Mat, MatMut, MatRef, Par, Side};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m.data[i * values.len() + i] = v;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diag().iter().sum()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        gemm_nn(&mut out.data, &self.data, &other.data, self.rows, self.cols, other.cols, 1.0, false);
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::Shape(format!(
                "vector of length {} against {} columns",
                v.len(),
                self.cols
            )));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    /// Largest absolute asymmetry `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols.min(self.rows) {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn as_faer(&self) -> MatRef<'_, f64> {
        MatRef::from_row_major_slice(&self.data, self.rows, self.cols)
    }

    fn to_faer(&self) -> Mat<f64> {
        Mat::from_fn(self.rows, self.cols, |i, j| self.get(i, j))
    }

    fn from_faer(m: MatRef<'_, f64>) -> Matrix {
        Matrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn accum(accumulate: bool) -> Accum {
    if accumulate {
        Accum::Add
    } else {
        Accum::Replace
    }
}

/// `C (m x n) (+)= alpha * A (m x k) * B^T` where `B` is stored `n x k`.
#[allow(clippy::too_many_arguments)]
pub fn gemm_nt(c: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize, alpha: f64, accumulate: bool) {
    let a = MatRef::from_row_major_slice(a, m, k);
    let b = MatRef::from_row_major_slice(b, n, k);
    let c = MatMut::from_row_major_slice_mut(c, m, n);
    matmul(c, accum(accumulate), a, b.transpose(), alpha, Par::Seq);
}

/// `C (m x n) (+)= alpha * A (m x k) * B (k x n)`.
#[allow(clippy::too_many_arguments)]
pub fn gemm_nn(c: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize, alpha: f64, accumulate: bool) {
    let a = MatRef::from_row_major_slice(a, m, k);
    let b = MatRef::from_row_major_slice(b, k, n);
    let c = MatMut::from_row_major_slice_mut(c, m, n);
    matmul(c, accum(accumulate), a, b, alpha, Par::Seq);
}

/// `C (m x n) (+)= alpha * A^T * B` where `A` is stored `k x m` and `B` is `k x n`.
#[allow(clippy::too_many_arguments)]
pub fn gemm_tn(c: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize, alpha: f64, accumulate: bool) {
    let a = MatRef::from_row_major_slice(a, k, m);
    let b = MatRef::from_row_major_slice(b, k, n);
    let c = MatMut::from_row_major_slice_mut(c, m, n);
    matmul(c, accum(accumulate), a.transpose(), b, alpha, Par::Seq);
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(a: &Matrix) -> Result<Vec<f64>> {
    square(a)?;
    if a.rows == 0 {
        return Ok(Vec::new());
    }
    a.as_faer()
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numeric(format!("symmetric eigensolver failed: {e:?}")))
}

/// Eigenvalues (ascending) and eigenvectors (as matrix columns).
pub fn sym_eigen(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    square(a)?;
    let evd = a
        .as_faer()
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numeric(format!("symmetric eigensolver failed: {e:?}")))?;
    let vals = (0..a.rows).map(|i| evd.S()[i]).collect();
    Ok((vals, Matrix::from_faer(evd.U())))
}

/// Singular values in descending order.
pub fn singular_values(a: &Matrix) -> Result<Vec<f64>> {
    a.as_faer()
        .singular_values()
        .map_err(|e| Error::Numeric(format!("svd failed: {e:?}")))
}

fn square(a: &Matrix) -> Result<()> {
    if a.rows != a.cols {
        return Err(Error::Shape(format!("expected a square matrix, got {}x{}", a.rows, a.cols)));
    }
    Ok(())
}

/// Lower Cholesky factor `A = L L^T`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: Mat<f64>,
}

impl Cholesky {
    pub fn new(a: &Matrix) -> Result<Self> {
        square(a)?;
        let llt = a.as_faer().llt(Side::Lower).map_err(|e| Error::Conditioning {
            message: format!("cholesky failed: {e:?}"),
            jitters: vec![0.0],
        })?;
        Ok(Self { l: llt.L().to_owned() })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn factor(&self) -> Matrix {
        Matrix::from_faer(self.l.as_ref())
    }

    /// Solves `L z = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let mut z = Mat::from_fn(b.len(), 1, |i, _| b[i]);
        triangular_solve::solve_lower_triangular_in_place(self.l.as_ref(), z.as_mut(), Par::Seq);
        (0..b.len()).map(|i| z[(i, 0)]).collect()
    }

    /// Solves `L Z = B` for a row-major right-hand side with `dim` rows.
    pub fn solve_lower_matrix(&self, b: &Matrix) -> Matrix {
        let mut z = b.to_faer();
        triangular_solve::solve_lower_triangular_in_place(self.l.as_ref(), z.as_mut(), Par::Seq);
        Matrix::from_faer(z.as_ref())
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut z = Mat::from_fn(b.len(), 1, |i, _| b[i]);
        triangular_solve::solve_lower_triangular_in_place(self.l.as_ref(), z.as_mut(), Par::Seq);
        triangular_solve::solve_upper_triangular_in_place(self.l.transpose(), z.as_mut(), Par::Seq);
        (0..b.len()).map(|i| z[(i, 0)]).collect()
    }

    /// Explicit inverse `A^{-1}`.
    pub fn inverse(&self) -> Matrix {
        let n = self.dim();
        let mut z = Mat::<f64>::identity(n, n);
        triangular_solve::solve_lower_triangular_in_place(self.l.as_ref(), z.as_mut(), Par::Seq);
        triangular_solve::solve_upper_triangular_in_place(self.l.transpose(), z.as_mut(), Par::Seq);
        Matrix::from_faer(z.as_ref())
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.l[(i, i)].ln()).sum::<f64>()
    }
}

/// Escalating diagonal jitter, relative to the mean diagonal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JitterPolicy {
    pub start: f64,
    pub factor: f64,
    pub max: f64,
}

impl Default for JitterPolicy {
    fn default() -> Self {
        Self {
            start: 1e-10,
            factor: 10.0,
            max: 1e-4,
        }
    }
}

/// Result of a jittered factorization: the factor, the absolute jitter that
/// succeeded, and every absolute jitter attempted.
#[derive(Clone, Debug)]
pub struct JitteredCholesky {
    pub chol: Cholesky,
    pub jitter: f64,
    pub attempts: Vec<f64>,
}

/// Factors `A + diag_shift I`, first without jitter and then with the
/// escalating schedule of `policy`.
pub fn cholesky_with_jitter(a: &Matrix, diag_shift: f64, policy: &JitterPolicy) -> Result<JitteredCholesky> {
    square(a)?;
    let n = a.rows;
    let scale = if n == 0 { 1.0 } else { (a.trace() / n as f64).abs().max(f64::MIN_POSITIVE) };
    let mut attempts = Vec::new();
    let mut jitter = 0.0;
    loop {
        let mut shifted = a.clone();
        for i in 0..n {
            shifted.data[i * n + i] += diag_shift + jitter;
        }
        attempts.push(jitter);
        if let Ok(chol) = Cholesky::new(&shifted) {
            return Ok(JitteredCholesky { chol, jitter, attempts });
        }
        let next = if jitter == 0.0 { policy.start * scale } else { jitter * policy.factor };
        if next > policy.max * scale * (1.0 + 1e-12) {
            return Err(Error::Conditioning {
                message: format!("factorization failed up to jitter {:e}", policy.max * scale),
                jitters: attempts,
            });
        }
        jitter = next;
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LanczosOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LanczosResult {
    pub value: f64,
    pub residual: f64,
    pub iterations: usize,
    pub shift: f64,
}

/// Smallest eigenvalue of a symmetric operator of dimension `n`.
///
/// Runs Lanczos with full reorthogonalization on `shift * I - A`, where the
/// shift bounds the spectrum from above, so the target becomes the dominant
/// end. Convergence is declared when the Ritz residual falls below
/// `tol * shift`.
pub fn lanczos_smallest(mut apply: impl FnMut(&[f64], &mut [f64]), n: usize, opts: &LanczosOptions) -> Result<LanczosResult> {
    if n == 0 {
        return Err(Error::Shape("empty operator".into()));
    }
    let mut rng = rng::stream(opts.seed);
    let mut tmp = vec![0.0; n];

    // Spectrum upper bound from a few power steps (|A| <= shift).
    let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    normalize(&mut v);
    let mut est: f64 = 0.0;
    for _ in 0..20 {
        apply(&v, &mut tmp);
        est = est.max(norm2(&tmp));
        v.copy_from_slice(&tmp);
        if normalize(&mut v) == 0.0 {
            break;
        }
    }
    let shift = if est > 0.0 { 1.05 * est } else { 1.0 };

    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut q: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    normalize(&mut q);
    let max_iter = opts.max_iter.min(n).max(1);
    let mut last_residual = f64::INFINITY;
    for k in 0..max_iter {
        apply(&q, &mut tmp);
        let mut w: Vec<f64> = q.iter().zip(&tmp).map(|(qi, ai)| shift * qi - ai).collect();
        let alpha = dot(&q, &w);
        basis.push(q.clone());
        alphas.push(alpha);
        // Full reorthogonalization, twice for stability.
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &w);
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= c * bi;
                }
            }
        }
        let beta = norm2(&w);

        let t = tridiagonal(&alphas, &betas);
        let (vals, vecs) = sym_eigen(&t)?;
        let top = vals.len() - 1;
        let ritz = vals[top];
        let residual = (beta * vecs.get(k, top)).abs();
        last_residual = residual;
        if residual <= opts.tol * shift || beta <= f64::EPSILON * shift || k + 1 == n {
            return Ok(LanczosResult {
                value: shift - ritz,
                residual,
                iterations: k + 1,
                shift,
            });
        }
        betas.push(beta);
        q = w.iter().map(|x| x / beta).collect();
    }
    Err(Error::Convergence {
        iterations: max_iter,
        residual: last_residual,
        history: Vec::new(),
    })
}

fn tridiagonal(alphas: &[f64], betas: &[f64]) -> Matrix {
    let k = alphas.len();
    let mut t = Matrix::zeros(k, k);
    for i in 0..k {
        t.set(i, i, alphas[i]);
        if i + 1 < k {
            t.set(i, i + 1, betas[i]);
            t.set(i + 1, i, betas[i]);
        }
    }
    t
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = norm2(v);
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
    n
}

#[derive(Clone, Copy, Debug)]
pub struct PowerOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 5000,
            restarts: 2,
            seed: 0,
        }
    }
}

/// Largest singular value of `A` from power iteration on `A A^T`.
///
/// `apply_t` maps an output-space vector `u` to `A^T u`, `apply` maps an
/// input-space vector to `A v`. The iterate lives in the (small) output
/// space. Each restart uses a distinct deterministic start vector; the
/// maximum over restarts is returned.
pub fn power_spectral_norm(
    mut apply: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    mut apply_t: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    out_dim: usize,
    opts: &PowerOptions,
) -> Result<f64> {
    let mut best: f64 = 0.0;
    for restart in 0..opts.restarts.max(1) {
        let mut rng = rng::stream(rng::derive_seed(opts.seed, "power-iteration", &[restart as u64]));
        let mut u: Vec<f64> = (0..out_dim).map(|_| rng::standard_normal(&mut rng)).collect();
        normalize(&mut u);
        let mut sigma = 0.0;
        let mut history = Vec::new();
        let mut converged = false;
        for _ in 0..opts.max_iter {
            let v = apply_t(&u)?;
            let s = norm2(&v);
            history.push(s);
            if s == 0.0 {
                sigma = 0.0;
                converged = true;
                break;
            }
            let mut next = apply(&v)?;
            let nn = normalize(&mut next);
            if nn == 0.0 {
                sigma = s;
                converged = true;
                break;
            }
            let rel = (s - sigma).abs() / s;
            sigma = s;
            u = next;
            if rel < opts.tol && history.len() > 2 {
                converged = true;
                break;
            }
        }
        if !converged {
            let n = history.len();
            let residual = if n >= 2 {
                (history[n - 1] - history[n - 2]).abs() / history[n - 1]
            } else {
                f64::INFINITY
            };
            return Err(Error::Convergence {
                iterations: opts.max_iter,
                residual,
                history,
            });
        }
        best = best.max(sigma);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_spd(n: usize, seed: u64) -> Matrix {
        let mut rng = rng::stream(seed);
        let a = Matrix::from_fn(n, n, |_, _| rng::standard_normal(&mut rng));
        let mut k = a.matmul(&a.transpose()).unwrap();
        for i in 0..n {
            let v = k.get(i, i) + 0.5;
            k.set(i, i, v);
        }
        k
    }

    #[test]
    fn gemm_variants_agree_with_naive() {
        let a = Matrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64 * 0.5 - 2.0);
        let b = Matrix::from_fn(4, 2, |i, j| (i as f64 - j as f64) * 0.25);
        let naive = Matrix::from_fn(3, 2, |i, j| (0..4).map(|k| a.get(i, k) * b.get(k, j)).sum());
        assert_eq!(a.matmul(&b).unwrap(), naive);

        let mut c = vec![0.0; 6];
        gemm_nt(&mut c, a.data(), b.transpose().data(), 3, 4, 2, 1.0, false);
        assert_eq!(c, naive.data());

        let mut c = vec![0.0; 6];
        gemm_tn(&mut c, a.transpose().data(), b.data(), 3, 4, 2, 1.0, false);
        assert_eq!(c, naive.data());
    }

    #[test]
    fn cholesky_solves() {
        let k = random_spd(6, 3);
        let chol = Cholesky::new(&k).unwrap();
        let b: Vec<f64> = (0..6).map(|i| i as f64 - 2.5).collect();
        let x = chol.solve(&b);
        let r = k.mul_vec(&x).unwrap();
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() < 1e-10);
        }
        let inv = chol.inverse();
        let eye = k.matmul(&inv).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((eye.get(i, j) - target).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn jitter_rescues_singular_psd() {
        let v = [1.0, 2.0, 3.0];
        let k = Matrix::from_fn(3, 3, |i, j| v[i] * v[j]);
        let f = cholesky_with_jitter(&k, 0.0, &JitterPolicy::default()).unwrap();
        assert!(f.jitter > 0.0);
        assert!(f.attempts.len() >= 2);
    }

    #[test]
    fn jitter_gives_up_on_indefinite() {
        let k = Matrix::diagonal(&[1.0, -1.0]);
        match cholesky_with_jitter(&k, 0.0, &JitterPolicy::default()) {
            Err(Error::Conditioning { jitters, .. }) => assert!(jitters.len() > 3),
            other => panic!("expected conditioning error, got {other:?}"),
        }
    }

    #[test]
    fn lanczos_matches_dense() {
        for seed in 0..5 {
            let k = random_spd(40, seed);
            let dense = sym_eigenvalues(&k).unwrap()[0];
            let res = lanczos_smallest(
                |x, y| y.copy_from_slice(&k.mul_vec(x).unwrap()),
                40,
                &LanczosOptions::default(),
            )
            .unwrap();
            assert!((res.value - dense).abs() <= 1e-6 * dense.abs().max(1e-12), "{} vs {}", res.value, dense);
        }
    }

    #[test]
    fn power_iteration_matches_svd() {
        let mut rng = rng::stream(11);
        let a = Matrix::from_fn(5, 30, |_, _| rng::standard_normal(&mut rng));
        let at = a.transpose();
        let s = power_spectral_norm(
            |v| a.mul_vec(v),
            |u| at.mul_vec(u),
            5,
            &PowerOptions { tol: 1e-12, ..Default::default() },
        )
        .unwrap();
        let top = singular_values(&a).unwrap()[0];
        assert!((s - top).abs() < 1e-6 * top);
    }

    #[test]
    fn power_iteration_reports_stagnation() {
        // A tolerance this tight cannot be met in three iterations.
        let a = Matrix::from_fn(4, 4, |i, j| if i == j { 1.0 / (1.0 + i as f64) } else { 0.0 });
        let at = a.transpose();
        let err = power_spectral_norm(
            |v| a.mul_vec(v),
            |u| at.mul_vec(u),
            4,
            &PowerOptions { tol: 1e-15, max_iter: 3, restarts: 1, seed: 1 },
        );
        assert!(matches!(err, Err(Error::Convergence { .. })));
    }
}
