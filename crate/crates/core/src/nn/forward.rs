use super::params::ParameterVector;
use super::spec::NetworkSpec;
use crate::error::{Error, Result};
use crate::linalg::{gemm_nt, Matrix};

/// Activations of one forward pass, row-major `N x width` per layer.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub n: usize,
    /// `pre[l]` is the pre-activation of layer `l`.
    pub pre: Vec<Vec<f64>>,
    /// `post[0]` is the input; `post[l + 1] = act(pre[l])`.
    pub post: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.post.last().expect("non-empty cache")
    }
}

pub(crate) fn check_input(spec: &NetworkSpec, x: &Matrix) -> Result<()> {
    if x.cols() != spec.input_dim() {
        return Err(Error::Shape(format!(
            "input has {} columns, network expects {}",
            x.cols(),
            spec.input_dim()
        )));
    }
    if !x.is_finite() {
        return Err(Error::Input("non-finite value in the input batch".into()));
    }
    Ok(())
}

pub(crate) fn check_params(spec: &NetworkSpec, params: &ParameterVector) -> Result<()> {
    if params.len() != spec.num_params() || params.frozen().len() != spec.num_frozen() {
        return Err(Error::Shape(format!(
            "parameter vector has {}+{} values, spec needs {}+{}",
            params.len(),
            params.frozen().len(),
            spec.num_params(),
            spec.num_frozen()
        )));
    }
    Ok(())
}

pub fn forward_cache(spec: &NetworkSpec, params: &ParameterVector, x: &Matrix) -> Result<ForwardCache> {
    check_input(spec, x)?;
    check_params(spec, params)?;
    let n = x.rows();
    let mut pre = Vec::with_capacity(spec.depth());
    let mut post = Vec::with_capacity(spec.depth() + 1);
    post.push(x.data().to_vec());
    for (l, slot) in spec.layout().iter().enumerate() {
        let (fi, fo) = (spec.fan_in(l), spec.fan_out(l));
        let mut z = vec![0.0; n * fo];
        if let Some(b) = params.bias(slot) {
            let bm = spec.bias_multiplier(l);
            for row in z.chunks_exact_mut(fo) {
                for (zi, bi) in row.iter_mut().zip(b) {
                    *zi = bm * bi;
                }
            }
        }
        gemm_nt(&mut z, &post[l], params.weights(slot), n, fi, fo, spec.weight_multiplier(l), true);
        let act = spec.layers[l].activation;
        let a: Vec<f64> = z.iter().map(|&v| act.apply(v)).collect();
        pre.push(z);
        post.push(a);
    }
    Ok(ForwardCache { n, pre, post })
}

/// Network outputs, `N x C`.
pub fn forward(spec: &NetworkSpec, params: &ParameterVector, x: &Matrix) -> Result<Matrix> {
    let cache = forward_cache(spec, params, x)?;
    let n = cache.n;
    let out = cache.post.into_iter().next_back().expect("non-empty cache");
    Matrix::from_vec(n, spec.output_dim(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::{init_params, InitConfig};
    use crate::nn::spec::{Activation, LayerSpec, Parametrization};

    #[test]
    fn linear_identity_network() {
        let spec = NetworkSpec {
            widths: vec![3, 3],
            layers: vec![LayerSpec {
                activation: Activation::Identity,
                bias: false,
                trainable: true,
                fan_in_scaling: false,
            }],
            parametrization: Parametrization::Ntp,
            bias_scale: 1.0,
        };
        let eye = Matrix::identity(3);
        let p = ParameterVector::new(&spec, eye.data().to_vec(), vec![]).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, -2.0, 0.5], vec![3.0, 0.0, 1.0]]).unwrap();
        assert_eq!(forward(&spec, &p, &x).unwrap(), x);
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let spec = NetworkSpec::mlp(&[4, 16, 16, 1], Parametrization::Ntp, false).unwrap();
        let p = init_params(&spec, &InitConfig::gaussian(3)).unwrap();
        let out = forward(&spec, &p, &Matrix::zeros(2, 4)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_input() {
        let spec = NetworkSpec::mlp(&[2, 3, 1], Parametrization::Ntp, true).unwrap();
        let p = init_params(&spec, &InitConfig::gaussian(0)).unwrap();
        assert!(matches!(forward(&spec, &p, &Matrix::zeros(1, 3)), Err(Error::Shape(_))));
        let x = Matrix::from_rows(&[vec![f64::NAN, 0.0]]).unwrap();
        assert!(matches!(forward(&spec, &p, &x), Err(Error::Input(_))));
    }
}
