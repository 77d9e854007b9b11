use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::problem::SyntheticProblem;
use super::stability::{
    deep_relu_net, gram_min_eigenvalue, shallow_relu_net, stability_proxy, DeviationMethod, GramMethod, ProxyOptions,
    StabilityReport,
};
use crate::error::{Error, Result};
use crate::kernel::{entk, shallow_ntk_gram, AnalyticNtk, EntkStrategy};
use crate::nn::{NetworkSpec, ParameterVector};
use crate::rng;
use crate::stats::{median, quantile};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub widths: Vec<usize>,
    /// Affine-layer counts; depth 2 selects the shallow model.
    pub depths: Vec<usize>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_gram")]
    pub gram: GramMethod,
    #[serde(default = "default_deviation")]
    pub deviation: DeviationMethod,
    /// Biases in the deep MLPs.
    #[serde(default = "default_true")]
    pub deep_bias: bool,
    /// Widths above this are skipped (recorded as failed cells) for depth > 2.
    #[serde(default = "default_deep_cap")]
    pub max_deep_width: usize,
    #[serde(default = "default_true")]
    pub analytic_lambda0: bool,
}

fn default_k() -> usize {
    5
}
fn default_gram() -> GramMethod {
    GramMethod::Dense
}
fn default_deviation() -> DeviationMethod {
    DeviationMethod::Auto
}
fn default_true() -> bool {
    true
}
fn default_deep_cap() -> usize {
    4096
}

impl SweepConfig {
    pub fn new(widths: Vec<usize>, depths: Vec<usize>, seeds: Vec<u64>) -> Self {
        Self {
            widths,
            depths,
            seeds,
            k: default_k(),
            gram: default_gram(),
            deviation: default_deviation(),
            deep_bias: true,
            max_deep_width: default_deep_cap(),
            analytic_lambda0: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.depths.is_empty() {
            return Err(Error::Config("width and depth grids must be non-empty".into()));
        }
        if self.widths.contains(&0) {
            return Err(Error::Config("widths must be positive".into()));
        }
        if self.depths.iter().any(|&d| d < 2) {
            return Err(Error::Config("depths must be at least 2".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("at least one perturbation per cell is required".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub depth: usize,
    pub width: usize,
    pub seed: u64,
    /// Also present when the cell failed after the Gram spectrum was known.
    pub lambda_min: Option<f64>,
    pub report: Option<StabilityReport>,
    pub error: Option<String>,
}

/// Runs one cell: init seed and perturbation seed derive from
/// `(seed, depth, width)` so cells are independent of the grid.
pub fn run_cell(cfg: &SweepConfig, problem: &SyntheticProblem, depth: usize, width: usize, seed: u64) -> Result<StabilityReport> {
    if depth > 2 && width > cfg.max_deep_width {
        return Err(Error::Capacity {
            what: "deep MLP parameters",
            needed: width,
            budget: cfg.max_deep_width,
        });
    }
    let coords = [depth as u64, width as u64];
    let init_seed = rng::derive_seed(seed, "init", &coords);
    let perturbation_seed = rng::derive_seed(seed, "perturbation", &coords);
    let (spec, theta0) = cell_network(cfg, depth, width, init_seed)?;
    let opts = ProxyOptions {
        k: cfg.k,
        gram: cfg.gram,
        deviation: cfg.deviation,
    };
    stability_proxy(&spec, &theta0, &problem.x, &problem.y, &opts, init_seed, perturbation_seed)
}

fn cell_network(cfg: &SweepConfig, depth: usize, width: usize, init_seed: u64) -> Result<(NetworkSpec, ParameterVector)> {
    if depth == 2 {
        shallow_relu_net(width, init_seed)
    } else {
        deep_relu_net(depth, width, cfg.deep_bias, init_seed)
    }
}

/// `lambda_min(G(0))` of a cell's network alone.
pub fn cell_lambda_min(cfg: &SweepConfig, problem: &SyntheticProblem, depth: usize, width: usize, seed: u64) -> Result<f64> {
    let init_seed = rng::derive_seed(seed, "init", &[depth as u64, width as u64]);
    let (spec, theta0) = cell_network(cfg, depth, width, init_seed)?;
    let g0 = entk(&spec, &theta0, &problem.x, None, EntkStrategy::Auto)?;
    gram_min_eigenvalue(&g0.matrix, cfg.gram)
}

/// Minimum eigenvalue of the infinite-width Gram matrix for one depth.
pub fn analytic_lambda0(problem: &SyntheticProblem, depth: usize, bias: bool) -> Result<f64> {
    let k = if depth == 2 {
        shallow_ntk_gram(&problem.x)?
    } else {
        AnalyticNtk::new(depth, if bias { 1.0 } else { 0.0 }).gram(&problem.x, &problem.x)?
    };
    gram_min_eigenvalue(&k, GramMethod::Dense)
}

/// Every `(depth, width, seed)` cell; failures are recorded, not raised.
pub fn width_sweep(cfg: &SweepConfig, problem: &SyntheticProblem) -> Result<Vec<SweepCell>> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for &d in &cfg.depths {
        for &w in &cfg.widths {
            for &s in &cfg.seeds {
                jobs.push((d, w, s));
            }
        }
    }
    let lambda0: Vec<(usize, Option<f64>)> = cfg
        .depths
        .iter()
        .map(|&d| (d, cfg.analytic_lambda0.then(|| analytic_lambda0(problem, d, cfg.deep_bias).ok()).flatten()))
        .collect();
    Ok(jobs
        .into_par_iter()
        .map(|(depth, width, seed)| {
            let outcome = run_cell(cfg, problem, depth, width, seed);
            let l0 = lambda0.iter().find(|(d, _)| *d == depth).and_then(|(_, l)| *l);
            match outcome {
                Ok(mut report) => {
                    report.lambda0 = l0;
                    SweepCell {
                        depth,
                        width,
                        seed,
                        lambda_min: Some(report.lambda_min),
                        report: Some(report),
                        error: None,
                    }
                }
                Err(e) => {
                    log::warn!("cell depth={depth} width={width} seed={seed} failed: {e}");
                    let lambda_min = match e {
                        Error::ConditionViolated(_) => cell_lambda_min(cfg, problem, depth, width, seed).ok(),
                        _ => None,
                    };
                    SweepCell {
                        depth,
                        width,
                        seed,
                        lambda_min,
                        report: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect())
}

/// One `(depth, width, seed, statistic, value)` record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LongRow {
    pub depth: usize,
    pub width: usize,
    pub seed: u64,
    pub statistic: String,
    pub value: f64,
}

/// Long-format table with per-cell summaries and each sampled `C'`.
pub fn long_format(cells: &[SweepCell]) -> Result<Vec<LongRow>> {
    let mut rows = Vec::new();
    for c in cells {
        let Some(r) = &c.report else {
            if let Some(l) = c.lambda_min {
                rows.push(LongRow {
                    depth: c.depth,
                    width: c.width,
                    seed: c.seed,
                    statistic: "lambda_min".into(),
                    value: l,
                });
            }
            continue;
        };
        let mut push = |statistic: &str, value: f64| {
            rows.push(LongRow {
                depth: c.depth,
                width: c.width,
                seed: c.seed,
                statistic: statistic.to_string(),
                value,
            })
        };
        push("lambda_min", r.lambda_min);
        push("rho", r.rho);
        push("residual_norm", r.residual_norm);
        push("c_prime_median", median(&r.c_prime)?);
        push("c_prime_q25", quantile(&r.c_prime, 0.25)?);
        push("c_prime_q75", quantile(&r.c_prime, 0.75)?);
        push("c_prime_max", r.max_c_prime());
        push("deviation_median", median(&r.deviation_norms)?);
        push("violated", if r.max_c_prime() > 0.5 { 1.0 } else { 0.0 });
        if let Some(l0) = r.lambda0 {
            push("lambda0", l0);
        }
        for (i, (cp, dev)) in r.c_prime.iter().zip(&r.deviation_norms).enumerate() {
            push(&format!("c_prime_{i}"), *cp);
            push(&format!("deviation_{i}"), *dev);
        }
    }
    Ok(rows)
}
