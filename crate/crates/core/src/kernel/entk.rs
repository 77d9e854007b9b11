use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{gemm_nt, sym_eigenvalues, Matrix};
use crate::nn::{JacobianOperator, NetworkSpec, ParameterVector, DEFAULT_JACOBIAN_BUDGET};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Empirical,
    Analytic,
}

/// Kernel Gram matrix with block rows `(sample, output)` in sample-major order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelMatrix {
    pub matrix: Matrix,
    pub provenance: Provenance,
    /// SHA-256 prefix of the generating inputs.
    pub fingerprint: String,
}

impl KernelMatrix {
    pub fn new(matrix: Matrix, provenance: Provenance, inputs: &[&Matrix]) -> Self {
        Self {
            matrix,
            provenance,
            fingerprint: fingerprint(inputs),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    /// Symmetry to `1e-10` (relative to the largest entry), non-negative
    /// diagonal and eigenvalues above `-1e-8`.
    pub fn validate(&self) -> Result<()> {
        let k = &self.matrix;
        if k.rows() != k.cols() {
            return Err(Error::Shape("kernel matrix is not square".into()));
        }
        let scale = k.data().iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
        if k.asymmetry() > 1e-10 * scale {
            return Err(Error::Input(format!("kernel asymmetry {:e} exceeds tolerance", k.asymmetry())));
        }
        if k.diag().iter().any(|&d| d < 0.0) {
            return Err(Error::Input("kernel has a negative diagonal entry".into()));
        }
        let min = sym_eigenvalues(k)?.first().copied().unwrap_or(0.0);
        if min < -1e-8 * scale {
            return Err(Error::Input(format!("kernel is not PSD: eigenvalue {min:e}")));
        }
        Ok(())
    }
}

pub fn fingerprint(inputs: &[&Matrix]) -> String {
    let mut h = Sha256::new();
    for m in inputs {
        h.update((m.rows() as u64).to_le_bytes());
        h.update((m.cols() as u64).to_le_bytes());
        for v in m.data() {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(&h.finalize()[..8])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntkStrategy {
    /// Dense when the Jacobians fit the budget, factored otherwise.
    Auto,
    /// `J J'^T` from materialized Jacobians.
    Dense,
    /// Per-layer factorization `(delta . delta') (a . a')`, never forming `J`.
    Factored,
}

/// `J(X; theta) J(X'; theta')^T` with the layer-wise factorization
///
/// `sum_l w_l^2 (delta_l . delta_l') (a_{l-1} . a_{l-1}') + b_l^2 (delta_l . delta_l')`,
///
/// which needs `O(N N' m)` work per layer and no `P`-sized buffers. The two
/// parameter vectors may differ (cross kernels).
pub fn entk_cross(
    spec: &NetworkSpec,
    theta_a: &ParameterVector,
    x_a: &Matrix,
    theta_b: &ParameterVector,
    x_b: &Matrix,
) -> Result<Matrix> {
    let a = JacobianOperator::new(spec, theta_a, x_a)?;
    let b = JacobianOperator::new(spec, theta_b, x_b)?;
    factored(&a, &b)
}

fn factored(a: &JacobianOperator<'_>, b: &JacobianOperator<'_>) -> Result<Matrix> {
    Ok(KernelFeatures::from_operator(a).cross(&KernelFeatures::from_operator(b)))
}

#[derive(Clone, Debug)]
struct LayerFeatures {
    fan_in: usize,
    fan_out: usize,
    w2: f64,
    b2: f64,
    post: Vec<f64>,
    /// One `N x fan_out` block per output unit.
    deltas: Vec<Vec<f64>>,
}

/// Per-layer activations and output cotangents of a batch of inputs, enough
/// to evaluate eNTK entries against any other batch at the same architecture
/// without revisiting the network.
#[derive(Clone, Debug)]
pub struct KernelFeatures {
    n: usize,
    c: usize,
    layers: Vec<LayerFeatures>,
}

impl KernelFeatures {
    pub fn new(spec: &NetworkSpec, theta: &ParameterVector, x: &Matrix) -> Result<Self> {
        Ok(Self::from_operator(&JacobianOperator::new(spec, theta, x)?))
    }

    fn from_operator(op: &JacobianOperator<'_>) -> Self {
        let spec = op.spec();
        let c = spec.output_dim();
        let mut deltas: Vec<_> = (0..c).map(|k| op.output_deltas(k)).collect();
        let layers = spec
            .layout()
            .iter()
            .enumerate()
            .filter(|(_, slot)| slot.trainable)
            .map(|(l, slot)| LayerFeatures {
                fan_in: spec.fan_in(l),
                fan_out: spec.fan_out(l),
                w2: spec.weight_multiplier(l).powi(2),
                b2: if slot.bias.is_some() { spec.bias_multiplier(l).powi(2) } else { 0.0 },
                post: op.cache().post[l].clone(),
                deltas: deltas.iter_mut().map(|d| std::mem::take(&mut d[l])).collect(),
            })
            .collect();
        KernelFeatures {
            n: op.num_samples(),
            c,
            layers,
        }
    }

    pub fn num_samples(&self) -> usize {
        self.n
    }

    /// `(N C) x (N' C)` cross kernel.
    pub fn cross(&self, other: &KernelFeatures) -> Matrix {
        let (na, nb, c) = (self.n, other.n, self.c);
        assert_eq!(self.layers.len(), other.layers.len(), "features from different architectures");
        let mut out = Matrix::zeros(na * c, nb * c);
        let mut g = vec![0.0; na * nb];
        let mut act = vec![0.0; na * nb];
        for (la, lb) in self.layers.iter().zip(&other.layers) {
            let (fi, fo) = (la.fan_in, la.fan_out);
            gemm_nt(&mut act, &la.post, &lb.post, na, fi, nb, 1.0, false);
            for ca in 0..c {
                for cb in 0..c {
                    gemm_nt(&mut g, &la.deltas[ca], &lb.deltas[cb], na, fo, nb, 1.0, false);
                    for i in 0..na {
                        let row = out.row_mut(i * c + ca);
                        for j in 0..nb {
                            row[j * c + cb] += g[i * nb + j] * (la.w2 * act[i * nb + j] + la.b2);
                        }
                    }
                }
            }
        }
        out
    }

    /// Diagonal of the self kernel, `||J(x_i)||^2` per row of the Jacobian.
    pub fn diag(&self) -> Vec<f64> {
        let c = self.c;
        let mut out = vec![0.0; self.n * c];
        for l in &self.layers {
            for i in 0..self.n {
                let a = &l.post[i * l.fan_in..(i + 1) * l.fan_in];
                let aa = crate::linalg::dot(a, a);
                for k in 0..c {
                    let d = &l.deltas[k][i * l.fan_out..(i + 1) * l.fan_out];
                    out[i * c + k] += crate::linalg::dot(d, d) * (l.w2 * aa + l.b2);
                }
            }
        }
        out
    }
}

/// Empirical NTK `K(X, X')`; `x2 = None` means `X' = X`.
pub fn entk(
    spec: &NetworkSpec,
    theta: &ParameterVector,
    x: &Matrix,
    x2: Option<&Matrix>,
    strategy: EntkStrategy,
) -> Result<KernelMatrix> {
    let op_a = JacobianOperator::new(spec, theta, x)?;
    let op_b = match x2 {
        Some(x2) => Some(JacobianOperator::new(spec, theta, x2)?),
        None => None,
    };
    let b = op_b.as_ref().unwrap_or(&op_a);
    let (ra, p) = op_a.shape();
    let (rb, _) = b.shape();
    let fits = ra.max(rb).saturating_mul(p) <= DEFAULT_JACOBIAN_BUDGET;
    let dense = match strategy {
        EntkStrategy::Dense => true,
        EntkStrategy::Factored => false,
        EntkStrategy::Auto => fits,
    };
    let mut matrix = if dense {
        let ja = op_a.dense(DEFAULT_JACOBIAN_BUDGET)?;
        let jb = if x2.is_some() { Some(b.dense(DEFAULT_JACOBIAN_BUDGET)?) } else { None };
        let jb = jb.as_ref().unwrap_or(&ja);
        let mut k = Matrix::zeros(ra, rb);
        gemm_nt(k.data_mut(), ja.data(), jb.data(), ra, p, rb, 1.0, false);
        k
    } else {
        factored(&op_a, b)?
    };
    if x2.is_none() {
        symmetrize(&mut matrix);
    }
    let inputs: Vec<&Matrix> = std::iter::once(x).chain(x2).collect();
    Ok(KernelMatrix::new(matrix, Provenance::Empirical, &inputs))
}

/// Replaces `K` by `(K + K^T) / 2`.
pub fn symmetrize(k: &mut Matrix) {
    let n = k.rows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (k.get(i, j) + k.get(j, i));
            k.set(i, j, v);
            k.set(j, i, v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_params, InitConfig, Parametrization};

    #[test]
    fn linear_model_kernel_is_gram() {
        let spec = NetworkSpec::linear(3, 1).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 2.0, 0.0], vec![0.5, -1.0, 3.0]]).unwrap();
        for seed in 0..3 {
            let p = init_params(&spec, &InitConfig::gaussian(seed)).unwrap();
            let k = entk(&spec, &p, &x, None, EntkStrategy::Factored).unwrap();
            assert_eq!(k.matrix, x.matmul(&x.transpose()).unwrap());
        }
    }

    #[test]
    fn strategies_agree_multi_output() {
        let spec = NetworkSpec::mlp(&[3, 7, 5, 2], Parametrization::Ntp, true).unwrap();
        let p = init_params(&spec, &InitConfig::gaussian(4)).unwrap();
        let x = Matrix::from_fn(4, 3, |i, j| ((i * 3 + j) as f64 * 0.37).sin());
        let d = entk(&spec, &p, &x, None, EntkStrategy::Dense).unwrap();
        let f = entk(&spec, &p, &x, None, EntkStrategy::Factored).unwrap();
        for (a, b) in d.matrix.data().iter().zip(f.matrix.data()) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
        d.validate().unwrap();
        assert_eq!(d.fingerprint, f.fingerprint);
    }

    #[test]
    fn cross_kernel_matches_dense_product() {
        let spec = NetworkSpec::shallow(2, 9).unwrap();
        let p0 = init_params(&spec, &InitConfig::shallow(0)).unwrap();
        let p1 = init_params(&spec, &InitConfig::shallow(1)).unwrap();
        let p1 = p0.with_values(p1.values().to_vec()).unwrap();
        let xa = Matrix::from_rows(&[vec![0.6, 0.8], vec![1.0, 0.0]]).unwrap();
        let xb = Matrix::from_rows(&[vec![0.0, 1.0], vec![0.8, 0.6], vec![-0.6, 0.8]]).unwrap();
        let k = entk_cross(&spec, &p0, &xa, &p1, &xb).unwrap();
        let ja = crate::nn::jacobian(&spec, &p0, &xa, 1 << 20).unwrap();
        let jb = crate::nn::jacobian(&spec, &p1, &xb, 1 << 20).unwrap();
        let oracle = ja.matmul(&jb.transpose()).unwrap();
        for (a, b) in k.data().iter().zip(oracle.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
