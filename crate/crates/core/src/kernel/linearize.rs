use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{JacobianOperator, NetworkSpec, ParameterVector};

/// First-order Taylor model `f(x; theta0) + J(x; theta0) (theta - theta0)`.
#[derive(Clone, Debug)]
pub struct LinearizedNetwork {
    spec: NetworkSpec,
    theta0: ParameterVector,
}

pub fn linearize(spec: &NetworkSpec, theta0: &ParameterVector) -> LinearizedNetwork {
    LinearizedNetwork {
        spec: spec.clone(),
        theta0: theta0.clone(),
    }
}

impl LinearizedNetwork {
    pub fn expansion_point(&self) -> &ParameterVector {
        &self.theta0
    }

    /// Predictions at `theta`, `N x C`.
    pub fn predict(&self, theta: &[f64], x: &Matrix) -> Result<Matrix> {
        if theta.len() != self.theta0.len() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.theta0.len(),
                theta.len()
            )));
        }
        let op = JacobianOperator::new(&self.spec, &self.theta0, x)?;
        let dv: Vec<f64> = theta.iter().zip(self.theta0.values()).map(|(a, b)| a - b).collect();
        let jv = op.jvp(&dv)?;
        let out: Vec<f64> = op.output().iter().zip(&jv).map(|(f, d)| f + d).collect();
        Matrix::from_vec(x.rows(), self.spec.output_dim(), out)
    }
}
