use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::forward::forward;
use super::jacobian::JacobianOperator;
use super::params::ParameterVector;
use super::spec::NetworkSpec;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    SgdMomentum,
    Adamw,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Loss {
    /// `1/2 * mean_n ||f(x_n) - y_n||^2`.
    Mse,
    /// Mean softmax cross-entropy over the allowed logits.
    CrossEntropy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub lr: f64,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default)]
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub loss: Loss,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl TrainConfig {
    pub fn adamw(lr: f64, weight_decay: f64, batch_size: usize, epochs: usize, loss: Loss, seed: u64) -> Self {
        Self {
            optimizer: Optimizer::Adamw,
            lr,
            momentum: 0.0,
            weight_decay,
            batch_size,
            epochs,
            loss,
            seed,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn sgd(lr: f64, momentum: f64, weight_decay: f64, batch_size: usize, epochs: usize, loss: Loss, seed: u64) -> Self {
        Self {
            optimizer: Optimizer::SgdMomentum,
            lr,
            momentum,
            weight_decay,
            batch_size,
            epochs,
            loss,
            seed,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite_pos = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {v} must be finite and positive")))
            }
        };
        finite_pos("learning rate", self.lr)?;
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} must lie in [0, 1)", self.momentum)));
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(Error::Config(format!("weight decay {} must be finite and non-negative", self.weight_decay)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.optimizer == Optimizer::Adamw {
            finite_pos("eps", self.eps)?;
            for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
                if !(0.0..1.0).contains(&b) {
                    return Err(Error::Config(format!("{name} = {b} must lie in [0, 1)")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    /// `N x C` regression targets.
    Regression(Matrix),
    /// Class labels; `allowed` restricts the softmax to a subset of logits.
    Classes { labels: Vec<usize>, allowed: Option<Vec<usize>> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub targets: Targets,
}

impl Dataset {
    pub fn regression(x: Matrix, y: Matrix) -> Self {
        Self {
            x,
            targets: Targets::Regression(y),
        }
    }

    pub fn classification(x: Matrix, labels: Vec<usize>, allowed: Option<Vec<usize>>) -> Self {
        Self {
            x,
            targets: Targets::Classes { labels, allowed },
        }
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    fn check(&self, spec: &NetworkSpec, loss: Loss) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Input("training set is empty".into()));
        }
        let c = spec.output_dim();
        match (&self.targets, loss) {
            (Targets::Regression(y), Loss::Mse) => {
                if y.rows() != self.len() || y.cols() != c {
                    return Err(Error::Shape(format!(
                        "targets are {}x{}, expected {}x{c}",
                        y.rows(),
                        y.cols(),
                        self.len()
                    )));
                }
            }
            (Targets::Classes { labels, allowed }, Loss::CrossEntropy) => {
                if labels.len() != self.len() {
                    return Err(Error::Shape("one label per row required".into()));
                }
                if let Some(bad) = labels.iter().find(|&&l| l >= c) {
                    return Err(Error::Input(format!("label {bad} out of range for {c} outputs")));
                }
                if let Some(a) = allowed {
                    if a.iter().any(|&k| k >= c) || labels.iter().any(|l| !a.contains(l)) {
                        return Err(Error::Input("labels must lie inside the allowed logit set".into()));
                    }
                }
            }
            _ => return Err(Error::Config("loss does not match the target kind".into())),
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub params: ParameterVector,
    /// Mean minibatch loss per epoch.
    pub losses: Vec<f64>,
}

/// Loss and its gradient with respect to the outputs of one batch.
fn loss_and_grad(out: &[f64], c: usize, targets: &Targets, rows: &[usize]) -> (f64, Vec<f64>) {
    let b = rows.len() as f64;
    let mut grad = vec![0.0; out.len()];
    let mut loss = 0.0;
    match targets {
        Targets::Regression(y) => {
            for (i, &r) in rows.iter().enumerate() {
                for k in 0..c {
                    let e = out[i * c + k] - y.get(r, k);
                    loss += 0.5 * e * e;
                    grad[i * c + k] = e / b;
                }
            }
        }
        Targets::Classes { labels, allowed } => {
            let all: Vec<usize>;
            let logits = match allowed {
                Some(a) => a.as_slice(),
                None => {
                    all = (0..c).collect();
                    &all
                }
            };
            for (i, &r) in rows.iter().enumerate() {
                let o = &out[i * c..(i + 1) * c];
                let max = logits.iter().map(|&k| o[k]).fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = logits.iter().map(|&k| (o[k] - max).exp()).sum();
                let lse = max + z.ln();
                loss += lse - o[labels[r]];
                for &k in logits {
                    let p = (o[k] - lse).exp();
                    let target = if k == labels[r] { 1.0 } else { 0.0 };
                    grad[i * c + k] = (p - target) / b;
                }
            }
        }
    }
    (loss / b, grad)
}

/// Mini-batch training from `theta0`. Only trainable parameters move.
pub fn train(spec: &NetworkSpec, theta0: &ParameterVector, data: &Dataset, cfg: &TrainConfig) -> Result<TrainResult> {
    cfg.validate()?;
    data.check(spec, cfg.loss)?;
    let mut params = theta0.clone();
    let p = params.len();
    let mut m1 = vec![0.0; p];
    let mut m2 = if cfg.optimizer == Optimizer::Adamw { vec![0.0; p] } else { Vec::new() };
    let mut step = 0i32;
    let mut losses = Vec::with_capacity(cfg.epochs);
    let n = data.len();
    let c = spec.output_dim();
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..cfg.epochs {
        let mut shuffle = rng::named_stream(cfg.seed, "shuffle", &[epoch as u64]);
        order.sort_unstable();
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        for rows in order.chunks(cfg.batch_size) {
            let xb = data.x.select_rows(rows);
            let op = JacobianOperator::new(spec, &params, &xb)?;
            let (loss, u) = loss_and_grad(op.output(), c, &data.targets, rows);
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    last_finite_epoch: epoch.checked_sub(1),
                });
            }
            total += loss * rows.len() as f64;
            let grad = op.vjp(&u)?;
            drop(op);
            step += 1;
            let theta = params.values_mut();
            match cfg.optimizer {
                Optimizer::SgdMomentum => {
                    for ((t, g), buf) in theta.iter_mut().zip(&grad).zip(m1.iter_mut()) {
                        let d = g + cfg.weight_decay * *t;
                        *buf = cfg.momentum * *buf + d;
                        *t -= cfg.lr * *buf;
                    }
                }
                Optimizer::Adamw => {
                    let bc1 = 1.0 - cfg.beta1.powi(step);
                    let bc2 = 1.0 - cfg.beta2.powi(step);
                    for i in 0..p {
                        theta[i] -= cfg.lr * cfg.weight_decay * theta[i];
                        m1[i] = cfg.beta1 * m1[i] + (1.0 - cfg.beta1) * grad[i];
                        m2[i] = cfg.beta2 * m2[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
                        let mh = m1[i] / bc1;
                        let vh = m2[i] / bc2;
                        theta[i] -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
                    }
                }
            }
        }
        let epoch_loss = total / n as f64;
        if !epoch_loss.is_finite() || params.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                last_finite_epoch: epoch.checked_sub(1),
            });
        }
        losses.push(epoch_loss);
    }
    Ok(TrainResult { params, losses })
}

/// Arg-max class over the allowed logits (lowest index on ties).
pub fn predict_classes(spec: &NetworkSpec, params: &ParameterVector, x: &Matrix, allowed: Option<&[usize]>) -> Result<Vec<usize>> {
    let out = forward(spec, params, x)?;
    let all: Vec<usize> = (0..spec.output_dim()).collect();
    let logits = allowed.unwrap_or(&all);
    Ok((0..out.rows())
        .map(|r| {
            let row = out.row(r);
            let mut best = logits[0];
            for &k in &logits[1..] {
                if row[k] > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect())
}

/// Fraction of rows whose predicted class equals the label.
pub fn accuracy(spec: &NetworkSpec, params: &ParameterVector, x: &Matrix, labels: &[usize], allowed: Option<&[usize]>) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Input("cannot measure accuracy on an empty set".into()));
    }
    let pred = predict_classes(spec, params, x, allowed)?;
    let hits = pred.iter().zip(labels).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / labels.len() as f64)
}
