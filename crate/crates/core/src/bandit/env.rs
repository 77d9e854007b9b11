use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng;

/// Labelled feature rows, labels in `0..num_classes`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledData {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl LabeledData {
    pub fn new(features: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::Shape("one label per feature row required".into()));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Input(format!("label {bad} outside 0..{num_classes}")));
        }
        if !features.is_finite() {
            return Err(Error::Input("non-finite feature value".into()));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Isotropic Gaussian blobs: class centres `~ N(0, separation^2 I)`, points
/// `centre + N(0, I)`, labels uniform. Features are z-scored afterwards.
pub fn gaussian_blobs(n: usize, dim: usize, classes: usize, separation: f64, seed: u64) -> Result<LabeledData> {
    if n == 0 || dim == 0 || classes < 2 {
        return Err(Error::Config("blobs need n >= 1, dim >= 1 and at least two classes".into()));
    }
    let mut g = rng::named_stream(seed, "blobs", &[]);
    let centres: Vec<f64> = (0..classes * dim).map(|_| separation * rng::standard_normal(&mut g)).collect();
    let mut labels = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * dim);
    for i in 0..n {
        let c = i % classes;
        labels.push(c);
        for j in 0..dim {
            data.push(centres[c * dim + j] + rng::standard_normal(&mut g));
        }
    }
    let mut x = Matrix::from_vec(n, dim, data)?;
    standardize(&mut x);
    LabeledData::new(x, labels, classes)
}

/// Stand-in for the `magic` benchmark: `D = 10`, `K = 2`.
pub fn magic_like(n: usize, seed: u64) -> Result<LabeledData> {
    gaussian_blobs(n, 10, 2, 0.5, seed)
}

/// Stand-in for the `letter` benchmark: `D = 16`, `K = 26`.
pub fn letter_like(n: usize, seed: u64) -> Result<LabeledData> {
    gaussian_blobs(n, 16, 26, 1.0, seed)
}

/// Column-wise z-scoring in place; returns `(means, stds)`. Constant
/// columns keep unit scale.
pub fn standardize(x: &mut Matrix) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = (x.rows(), x.cols());
    let mut means = vec![0.0; d];
    let mut stds = vec![0.0; d];
    for j in 0..d {
        let m = (0..n).map(|i| x.get(i, j)).sum::<f64>() / n as f64;
        let v = (0..n).map(|i| (x.get(i, j) - m).powi(2)).sum::<f64>() / n as f64;
        means[j] = m;
        stds[j] = if v > 0.0 { v.sqrt() } else { 1.0 };
    }
    for i in 0..n {
        for j in 0..d {
            let v = (x.get(i, j) - means[j]) / stds[j];
            x.set(i, j, v);
        }
    }
    (means, stds)
}

/// Classification-to-bandit conversion with disjoint block arm features.
#[derive(Clone, Debug, PartialEq)]
pub struct BanditEnvironment {
    contexts: Matrix,
    labels: Vec<usize>,
    arms: usize,
}

/// Shuffles the dataset rows with the `"environment"` stream of `seed` and
/// keeps the first `rounds` as the context stream.
pub fn make_bandit_env(data: &LabeledData, rounds: usize, seed: u64) -> Result<BanditEnvironment> {
    let distinct = {
        let mut seen = vec![false; data.num_classes];
        data.labels.iter().for_each(|&l| seen[l] = true);
        seen.iter().filter(|&&s| s).count()
    };
    if distinct != data.num_classes || data.num_classes < 2 {
        return Err(Error::Config(format!(
            "dataset declares {} classes but {distinct} occur",
            data.num_classes
        )));
    }
    if rounds > data.len() {
        return Err(Error::Config(format!("{rounds} rounds requested from {} rows", data.len())));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng::named_stream(seed, "environment", &[]));
    order.truncate(rounds);
    Ok(BanditEnvironment {
        contexts: data.features.select_rows(&order),
        labels: order.iter().map(|&i| data.labels[i]).collect(),
        arms: data.num_classes,
    })
}

impl BanditEnvironment {
    pub fn context_dim(&self) -> usize {
        self.contexts.cols()
    }

    pub fn num_arms(&self) -> usize {
        self.arms
    }

    pub fn feature_dim(&self) -> usize {
        self.context_dim() * self.arms
    }

    pub fn rounds(&self) -> usize {
        self.labels.len()
    }

    pub fn context(&self, t: usize) -> &[f64] {
        self.contexts.row(t)
    }

    pub fn best_arm(&self, t: usize) -> usize {
        self.labels[t]
    }

    /// `1` iff `arm` is the row's class.
    pub fn reward(&self, t: usize, arm: usize) -> f64 {
        if arm == self.labels[t] {
            1.0
        } else {
            0.0
        }
    }

    /// Context placed in block `arm` of a zero vector of length `D * K`.
    pub fn encode(&self, context: &[f64], arm: usize) -> Vec<f64> {
        let d = context.len();
        let mut z = vec![0.0; d * self.arms];
        z[arm * d..(arm + 1) * d].copy_from_slice(context);
        z
    }

    /// All `K` arm features of round `t`, `K x (D * K)`.
    pub fn arm_features(&self, t: usize) -> Matrix {
        let rows: Vec<Vec<f64>> = (0..self.arms).map(|a| self.encode(self.context(t), a)).collect();
        Matrix::from_rows(&rows).expect("equal-length rows")
    }
}
