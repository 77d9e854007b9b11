//! Exact Jacobians of the network output with respect to the trainable
//! parameters. Rows are ordered sample-major, output-minor: row `n * C + c`
//! holds `d f_c(x_n) / d theta`.

use super::forward::{forward_cache, ForwardCache};
use super::params::ParameterVector;
use super::spec::{LayerSlot, NetworkSpec};
use crate::error::{Error, Result};
use crate::linalg::{gemm_nn, gemm_nt, gemm_tn, Matrix};

/// Default dense-Jacobian budget in f64 entries (1 GiB).
pub const DEFAULT_JACOBIAN_BUDGET: usize = 1 << 27;

/// The `(N*C) x P` Jacobian at fixed parameters and inputs, applied lazily.
pub struct JacobianOperator<'a> {
    spec: &'a NetworkSpec,
    params: &'a ParameterVector,
    slots: Vec<LayerSlot>,
    cache: ForwardCache,
}

impl<'a> JacobianOperator<'a> {
    pub fn new(spec: &'a NetworkSpec, params: &'a ParameterVector, x: &Matrix) -> Result<Self> {
        let cache = forward_cache(spec, params, x)?;
        Ok(Self {
            spec,
            params,
            slots: spec.layout(),
            cache,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        self.spec
    }

    pub fn num_samples(&self) -> usize {
        self.cache.n
    }

    /// Logical shape `(N*C, P)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.cache.n * self.spec.output_dim(), self.params.len())
    }

    pub fn cache(&self) -> &ForwardCache {
        &self.cache
    }

    /// Network outputs at the expansion point, flattened sample-major.
    pub fn output(&self) -> &[f64] {
        self.cache.output()
    }

    fn first_trainable(&self) -> Option<usize> {
        self.slots.iter().position(|s| s.trainable)
    }

    /// Back-propagates an output cotangent `u` (length `N*C`) and returns the
    /// pre-activation cotangents `delta[l]` (`N x m_{l+1}`) for every layer at
    /// or above the first trainable one; lower entries are empty.
    pub fn backprop(&self, u: &[f64]) -> Vec<Vec<f64>> {
        let n = self.cache.n;
        let depth = self.spec.depth();
        let stop = self.first_trainable().unwrap_or(depth);
        let mut deltas = vec![Vec::new(); depth];
        let last = depth - 1;
        let act = self.spec.layers[last].activation;
        let mut delta: Vec<f64> = u
            .iter()
            .zip(&self.cache.pre[last])
            .map(|(&ui, &z)| ui * act.derivative(z))
            .collect();
        for l in (stop..depth).rev() {
            if l > stop {
                let (fi, fo) = (self.spec.fan_in(l), self.spec.fan_out(l));
                let mut below = vec![0.0; n * fi];
                gemm_nn(
                    &mut below,
                    &delta,
                    self.params.weights(&self.slots[l]),
                    n,
                    fo,
                    fi,
                    self.spec.weight_multiplier(l),
                    false,
                );
                let act = self.spec.layers[l - 1].activation;
                for (b, &z) in below.iter_mut().zip(&self.cache.pre[l - 1]) {
                    *b *= act.derivative(z);
                }
                deltas[l] = std::mem::replace(&mut delta, below);
            } else {
                deltas[l] = std::mem::take(&mut delta);
            }
        }
        deltas
    }

    /// `J^T u`.
    pub fn vjp(&self, u: &[f64]) -> Result<Vec<f64>> {
        let (rows, p) = self.shape();
        if u.len() != rows {
            return Err(Error::Shape(format!("vjp expects a vector of length {rows}, got {}", u.len())));
        }
        let n = self.cache.n;
        let deltas = self.backprop(u);
        let mut g = vec![0.0; p];
        for (l, slot) in self.slots.iter().enumerate() {
            if !slot.trainable {
                continue;
            }
            let (fi, fo) = (self.spec.fan_in(l), self.spec.fan_out(l));
            gemm_tn(
                &mut g[slot.weight.0..slot.weight.1],
                &deltas[l],
                &self.cache.post[l],
                fo,
                n,
                fi,
                self.spec.weight_multiplier(l),
                false,
            );
            if let Some((lo, hi)) = slot.bias {
                let bm = self.spec.bias_multiplier(l);
                let gb = &mut g[lo..hi];
                for row in deltas[l].chunks_exact(fo) {
                    for (gi, di) in gb.iter_mut().zip(row) {
                        *gi += bm * di;
                    }
                }
            }
        }
        Ok(g)
    }

    /// `J v`, by forward-mode tangent propagation.
    pub fn jvp(&self, v: &[f64]) -> Result<Vec<f64>> {
        let (_, p) = self.shape();
        if v.len() != p {
            return Err(Error::Shape(format!("jvp expects a vector of length {p}, got {}", v.len())));
        }
        let n = self.cache.n;
        let mut tangent: Option<Vec<f64>> = None;
        for (l, slot) in self.slots.iter().enumerate() {
            let (fi, fo) = (self.spec.fan_in(l), self.spec.fan_out(l));
            let wm = self.spec.weight_multiplier(l);
            let mut dz = vec![0.0; n * fo];
            let mut touched = false;
            if let Some(t) = &tangent {
                gemm_nt(&mut dz, t, self.params.weights(slot), n, fi, fo, wm, false);
                touched = true;
            }
            if slot.trainable {
                gemm_nt(&mut dz, &self.cache.post[l], &v[slot.weight.0..slot.weight.1], n, fi, fo, wm, touched);
                if let Some((lo, hi)) = slot.bias {
                    let bm = self.spec.bias_multiplier(l);
                    for row in dz.chunks_exact_mut(fo) {
                        for (d, vb) in row.iter_mut().zip(&v[lo..hi]) {
                            *d += bm * vb;
                        }
                    }
                }
                touched = true;
            }
            if touched {
                let act = self.spec.layers[l].activation;
                for (d, &z) in dz.iter_mut().zip(&self.cache.pre[l]) {
                    *d *= act.derivative(z);
                }
                tangent = Some(dz);
            }
        }
        Ok(tangent.unwrap_or_else(|| vec![0.0; n * self.spec.output_dim()]))
    }

    /// Cotangents for the unit cotangent on output `c` of every sample.
    pub fn output_deltas(&self, c: usize) -> Vec<Vec<f64>> {
        let outputs = self.spec.output_dim();
        let mut u = vec![0.0; self.cache.n * outputs];
        for row in u.chunks_exact_mut(outputs) {
            row[c] = 1.0;
        }
        self.backprop(&u)
    }

    /// Materializes `J` if `N*C*P` fits in `budget` entries.
    pub fn dense(&self, budget: usize) -> Result<Matrix> {
        let (rows, p) = self.shape();
        let needed = rows.saturating_mul(p);
        if needed > budget {
            return Err(Error::Capacity {
                what: "dense Jacobian",
                needed,
                budget,
            });
        }
        let n = self.cache.n;
        let outputs = self.spec.output_dim();
        let mut jac = Matrix::zeros(rows, p);
        for c in 0..outputs {
            let deltas = self.output_deltas(c);
            for (l, slot) in self.slots.iter().enumerate() {
                if !slot.trainable {
                    continue;
                }
                let (fi, fo) = (self.spec.fan_in(l), self.spec.fan_out(l));
                let wm = self.spec.weight_multiplier(l);
                let bm = self.spec.bias_multiplier(l);
                for s in 0..n {
                    let d = &deltas[l][s * fo..(s + 1) * fo];
                    let a = &self.cache.post[l][s * fi..(s + 1) * fi];
                    let row = jac.row_mut(s * outputs + c);
                    let w = &mut row[slot.weight.0..slot.weight.1];
                    for (i, &di) in d.iter().enumerate() {
                        let scaled = wm * di;
                        for (wij, &aj) in w[i * fi..(i + 1) * fi].iter_mut().zip(a) {
                            *wij = scaled * aj;
                        }
                    }
                    if let Some((lo, hi)) = slot.bias {
                        for (bi, &di) in row[lo..hi].iter_mut().zip(d) {
                            *bi = bm * di;
                        }
                    }
                }
            }
        }
        Ok(jac)
    }
}

/// Dense Jacobian `(N*C) x P`.
pub fn jacobian(spec: &NetworkSpec, params: &ParameterVector, x: &Matrix, budget: usize) -> Result<Matrix> {
    JacobianOperator::new(spec, params, x)?.dense(budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::forward::forward;
    use crate::nn::params::{init_params, InitConfig};
    use crate::nn::spec::Parametrization;

    #[test]
    fn linear_model_jacobian_is_input() {
        let spec = NetworkSpec::linear(3, 1).unwrap();
        let p = init_params(&spec, &InitConfig::gaussian(5)).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![-1.0, 0.5, 0.0]]).unwrap();
        let j = jacobian(&spec, &p, &x, DEFAULT_JACOBIAN_BUDGET).unwrap();
        assert_eq!(j, x);
    }

    #[test]
    fn frozen_columns_absent() {
        let spec = NetworkSpec::shallow(2, 5).unwrap();
        let p = init_params(&spec, &InitConfig::shallow(1)).unwrap();
        let x = Matrix::from_rows(&[vec![0.6, 0.8]]).unwrap();
        let j = jacobian(&spec, &p, &x, DEFAULT_JACOBIAN_BUDGET).unwrap();
        assert_eq!(j.cols(), 10);
    }

    #[test]
    fn capacity_error_beyond_budget() {
        let spec = NetworkSpec::mlp(&[2, 8, 1], Parametrization::Ntp, true).unwrap();
        let p = init_params(&spec, &InitConfig::gaussian(1)).unwrap();
        let x = Matrix::zeros(4, 2);
        assert!(matches!(jacobian(&spec, &p, &x, 10), Err(Error::Capacity { .. })));
    }

    #[test]
    fn multi_output_rows_are_sample_major() {
        let spec = NetworkSpec::mlp(&[3, 6, 2], Parametrization::Ntp, true).unwrap();
        let p = init_params(&spec, &InitConfig::gaussian(2)).unwrap();
        let x = Matrix::from_rows(&[vec![0.1, -0.4, 0.9], vec![1.2, 0.3, -0.7]]).unwrap();
        let j = jacobian(&spec, &p, &x, DEFAULT_JACOBIAN_BUDGET).unwrap();
        let h = 1e-6;
        for k in [0, 7, 20, p.len() - 1] {
            let mut plus = p.values().to_vec();
            plus[k] += h;
            let mut minus = p.values().to_vec();
            minus[k] -= h;
            let fp = forward(&spec, &p.with_values(plus).unwrap(), &x).unwrap();
            let fm = forward(&spec, &p.with_values(minus).unwrap(), &x).unwrap();
            for row in 0..4 {
                let fd = (fp.data()[row] - fm.data()[row]) / (2.0 * h);
                assert!((j.get(row, k) - fd).abs() < 1e-6, "row {row} col {k}");
            }
        }
    }
}
