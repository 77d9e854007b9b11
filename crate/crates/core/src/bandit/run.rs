//! The online decision loop.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::env::BanditEnvironment;
use super::laplace::{fit_laplace, tune_prior_precision, update_noise, LaplaceForm, LaplacePosterior, TuneMode};
use super::schedule::{ucb_select, Schedule};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{train, Dataset, Loss, NetworkSpec, ParameterVector, TrainConfig};
use crate::rng;

/// A surrogate for the reward of an encoded (context, arm) pair.
pub trait RewardModel {
    /// Refits on all observations so far; `round` is the number of them.
    fn refit(&mut self, x: &Matrix, y: &[f64], round: usize) -> Result<()>;
    /// Posterior means and variances at each row of `z`.
    fn predict(&self, z: &Matrix) -> Result<(Vec<f64>, Vec<f64>)>;
    /// `log det(I + K / scale)` over the observations used in the last refit.
    fn information_gain(&self, _scale: f64) -> Result<f64> {
        Ok(0.0)
    }
    /// Current prior precision, if the model has one.
    fn prior_precision(&self) -> Option<f64> {
        None
    }
}

/// Trained network plus linearized Laplace posterior.
pub struct LaplaceSurrogate {
    spec: NetworkSpec,
    theta0: ParameterVector,
    train: TrainConfig,
    form: LaplaceForm,
    noise: f64,
    prior_precision: f64,
    tune: Option<TuneMode>,
    tune_noise: bool,
    posterior: Option<LaplacePosterior>,
    fitted_on: usize,
}

impl LaplaceSurrogate {
    /// Every refit trains from `theta0`; `train.seed` is mixed with the
    /// observation count so refits see different batch orders.
    pub fn new(
        spec: NetworkSpec,
        theta0: ParameterVector,
        train: TrainConfig,
        prior_precision: f64,
        tune: Option<TuneMode>,
    ) -> Result<Self> {
        train.validate()?;
        if train.loss != Loss::Mse {
            return Err(Error::Config("the bandit surrogate is trained with squared loss".into()));
        }
        if spec.output_dim() != 1 {
            return Err(Error::Config("the bandit surrogate needs one output".into()));
        }
        Ok(LaplaceSurrogate {
            spec,
            theta0,
            train,
            form: LaplaceForm::Auto,
            noise: 1.0,
            prior_precision,
            tune,
            tune_noise: false,
            posterior: None,
            fitted_on: 0,
        })
    }

    pub fn with_form(mut self, form: LaplaceForm) -> Self {
        self.form = form;
        self
    }

    /// Also re-estimates the observation noise at every refit (evidence
    /// fixed point), warm-started like the prior precision.
    pub fn with_noise_tuning(mut self, on: bool) -> Self {
        self.tune_noise = on;
        self
    }

    pub fn posterior(&self) -> Option<&LaplacePosterior> {
        self.posterior.as_ref()
    }
}

impl RewardModel for LaplaceSurrogate {
    fn refit(&mut self, x: &Matrix, y: &[f64], round: usize) -> Result<()> {
        let mut cfg = self.train.clone();
        cfg.seed = rng::derive_seed(self.train.seed, "refit", &[round as u64]);
        let targets = Matrix::from_vec(y.len(), 1, y.to_vec())?;
        let trained = train(&self.spec, &self.theta0, &Dataset::regression(x.clone(), targets), &cfg)?;
        let mut post = fit_laplace(&self.spec, &trained.params, x, y, self.prior_precision, self.noise, self.form)?;
        let fresh = y.len().saturating_sub(self.fitted_on);
        let mut lambda = self.prior_precision;
        let mut noise = self.noise;
        if let Some(mode) = &self.tune {
            lambda = tune_prior_precision(&post, mode, fresh)?;
        }
        if self.tune_noise && fresh > 0 {
            noise = update_noise(&post)?;
        }
        if (lambda, noise) != (self.prior_precision, self.noise) {
            post = post.with_hyperparameters(lambda, noise)?;
            self.prior_precision = lambda;
            self.noise = noise;
        }
        self.posterior = Some(post);
        self.fitted_on = y.len();
        Ok(())
    }

    fn predict(&self, z: &Matrix) -> Result<(Vec<f64>, Vec<f64>)> {
        let post = self
            .posterior
            .as_ref()
            .ok_or_else(|| Error::Internal("surrogate queried before the first refit".into()))?;
        Ok((post.mean(z)?, post.predictive_variance(z)?))
    }

    fn information_gain(&self, scale: f64) -> Result<f64> {
        match &self.posterior {
            Some(p) => p.log_det_ratio(scale),
            None => Ok(0.0),
        }
    }

    fn prior_precision(&self) -> Option<f64> {
        Some(self.prior_precision)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BanditConfig {
    pub rounds: usize,
    #[serde(default = "default_warmup")]
    pub warmup: usize,
    #[serde(default = "default_retrain_every")]
    pub retrain_every: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_warmup() -> usize {
    10
}
fn default_retrain_every() -> usize {
    100
}

impl BanditConfig {
    pub fn new(rounds: usize, seed: u64) -> Self {
        BanditConfig {
            rounds,
            warmup: default_warmup(),
            retrain_every: default_retrain_every(),
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub schedule: String,
    pub seed: u64,
    pub arms: Vec<usize>,
    pub rewards: Vec<f64>,
    pub optimal: Vec<f64>,
    pub gammas: Vec<f64>,
    pub retrained: Vec<bool>,
    /// Prior precision in force at each round (`NaN` when no model is used).
    pub prior_precision: Vec<f64>,
    /// Set when the run stopped early; the trace covers the completed rounds.
    pub aborted: Option<String>,
}

impl RegretTrace {
    pub fn len(&self) -> usize {
        self.arms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arms.is_empty()
    }

    pub fn final_regret(&self) -> f64 {
        *cumulative_regret(self).last().expect("R(0) is always present")
    }
}

/// `R(t) = sum_{s <= t} (optimal - obtained)`, with `R(0) = 0`.
pub fn cumulative_regret(trace: &RegretTrace) -> Vec<f64> {
    let mut out = Vec::with_capacity(trace.len() + 1);
    let mut acc = 0.0;
    out.push(acc);
    for (o, r) in trace.optimal.iter().zip(&trace.rewards) {
        acc += o - r;
        out.push(acc);
    }
    out
}

/// Runs `cfg.rounds` rounds. Warm-up rounds play uniformly at random; the
/// model is refitted after the warm-up and whenever the observation count
/// is a multiple of `retrain_every`. Training divergence ends the run early
/// with `aborted` set.
pub fn run_bandit(
    env: &BanditEnvironment,
    model: &mut dyn RewardModel,
    schedule: &Schedule,
    cfg: &BanditConfig,
) -> Result<RegretTrace> {
    schedule.validate()?;
    if cfg.rounds > env.rounds() {
        return Err(Error::Config(format!("{} rounds requested but the environment holds {}", cfg.rounds, env.rounds())));
    }
    if cfg.retrain_every == 0 {
        return Err(Error::Config("retrain_every must be positive".into()));
    }
    let k = env.num_arms();
    let mut policy = rng::named_stream(cfg.seed, "policy", &[]);
    let mut trace = RegretTrace {
        schedule: schedule.to_string(),
        seed: cfg.seed,
        arms: Vec::with_capacity(cfg.rounds),
        rewards: Vec::with_capacity(cfg.rounds),
        optimal: Vec::with_capacity(cfg.rounds),
        gammas: Vec::with_capacity(cfg.rounds),
        retrained: Vec::with_capacity(cfg.rounds),
        prior_precision: Vec::with_capacity(cfg.rounds),
        aborted: None,
    };
    let mut xs: Vec<f64> = Vec::with_capacity(cfg.rounds * env.feature_dim());
    let mut ys: Vec<f64> = Vec::with_capacity(cfg.rounds);
    let ntk_scale = match schedule {
        Schedule::NtkTheory(p) => p.m * p.lambda,
        _ => 1.0,
    };
    let mut logdet = 0.0f64;
    for t in 0..cfg.rounds {
        let mut retrained = false;
        let exploit = schedule.uses_model() && t >= cfg.warmup;
        if exploit && (t == cfg.warmup || t % cfg.retrain_every == 0) {
            let x = Matrix::from_vec(t, env.feature_dim(), xs.clone())?;
            match model.refit(&x, &ys, t) {
                Ok(()) => {}
                Err(e @ Error::Divergence { .. }) => {
                    trace.aborted = Some(format!("round {t}: {e}"));
                    return Ok(trace);
                }
                Err(e) => return Err(e),
            }
            if matches!(schedule, Schedule::NtkTheory(_)) {
                logdet = logdet.max(model.information_gain(ntk_scale)?);
            }
            retrained = true;
        }
        let (arm, gamma) = if exploit {
            let z = env.arm_features(t);
            let (means, vars) = model.predict(&z)?;
            let gamma = schedule.gamma(t + 1, logdet)?;
            (ucb_select(&means, &vars, gamma)?, gamma)
        } else {
            (policy.random_range(0..k), f64::NAN)
        };
        let reward = env.reward(t, arm);
        xs.extend(env.encode(env.context(t), arm));
        ys.push(reward);
        trace.arms.push(arm);
        trace.rewards.push(reward);
        trace.optimal.push(env.reward(t, env.best_arm(t)));
        trace.gammas.push(gamma);
        trace.retrained.push(retrained);
        trace.prior_precision.push(if exploit { model.prior_precision().unwrap_or(f64::NAN) } else { f64::NAN });
    }
    Ok(trace)
}
