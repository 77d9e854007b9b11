//! The four experiment pipelines behind the command-line subcommands.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{BanditParams, ContinualParams, ExperimentConfig, Figure1Params, SyntheticTabular, TaskKind};
use super::data::{load_idx_images, load_tabular_csv, resolve_data_path};
use super::manifest::{csv_bytes, OutputDir, RunManifest};
use super::plot::{aggregate, cell_key, emit_plot_data, line_chart_svg, PlotRow, Series};
use crate::bandit::{
    cumulative_regret, fit_laplace, letter_like, magic_like, make_bandit_env, run_bandit, BanditConfig, LabeledData,
    LaplaceForm, LaplaceSurrogate, RegretTrace, Schedule, TuneMode,
};
use crate::continual::{
    rotated_task_sequence, split_task_sequence, synthetic_digit_splits, train_sequential, ContinualMetrics, ImageSplits,
    TaskSequence,
};
use crate::diagnostics::{long_format, synthetic_problem_with, width_sweep, ProblemOptions, SweepCell, SweepConfig};
use crate::error::{Error, Result};
use crate::kernel::{gp_posterior, AnalyticNtk};
use crate::linalg::{JitterPolicy, Matrix};
use crate::nn::{forward, init_params, train, Dataset, InitConfig, Loss, NetworkSpec, Parametrization, TrainConfig};
use crate::rng;

/// What a pipeline produced. `partial` is set when some cells failed.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub partial: bool,
}

/// Validated config in, files plus manifest out.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<RunOutcome> {
    let mut cfg = cfg.clone();
    cfg.validate(cfg.kind)?;
    match cfg.kind {
        super::ExperimentKind::Diagnose => run_diagnose(&cfg, out),
        super::ExperimentKind::Bandit => run_bandit_experiment(&cfg, out),
        super::ExperimentKind::Continual => run_continual(&cfg, out),
        super::ExperimentKind::Figure1 => run_figure1(&cfg, out),
    }
}

fn finish(out: OutputDir, name: &str, manifest: RunManifest) -> Result<RunOutcome> {
    let partial = !manifest.failures.is_empty();
    Ok(RunOutcome {
        manifest: out.finish(name, manifest)?,
        partial,
    })
}

#[derive(Serialize)]
struct StabilityRow {
    depth: usize,
    width: usize,
    seed: u64,
    lambda_min: Option<f64>,
    rho: Option<f64>,
    residual_norm: Option<f64>,
    c_prime_median: Option<f64>,
    c_prime_max: Option<f64>,
    deviation_median: Option<f64>,
    verdict: Option<String>,
    lambda0: Option<f64>,
    error: Option<String>,
}

fn stability_row(c: &SweepCell) -> Result<StabilityRow> {
    let r = c.report.as_ref();
    Ok(StabilityRow {
        depth: c.depth,
        width: c.width,
        seed: c.seed,
        lambda_min: c.lambda_min,
        rho: r.map(|r| r.rho),
        residual_norm: r.map(|r| r.residual_norm),
        c_prime_median: r.map(|r| crate::stats::median(&r.c_prime)).transpose()?,
        c_prime_max: r.map(|r| r.max_c_prime()),
        deviation_median: r.map(|r| crate::stats::median(&r.deviation_norms)).transpose()?,
        verdict: r.map(|r| serde_json::to_value(r.verdict).map(|v| v.as_str().unwrap_or_default().to_string())).transpose()?,
        lambda0: r.and_then(|r| r.lambda0),
        error: c.error.clone(),
    })
}

/// Width sweep of the fast-convergence conditions.
pub fn run_diagnose(cfg: &ExperimentConfig, out: &Path) -> Result<RunOutcome> {
    let p = cfg.diagnose.as_ref().ok_or_else(|| Error::Config("missing [diagnose] block".into()))?;
    let mut manifest = RunManifest::new("diagnose", &cfg.hash()?, &cfg.seeds);
    let mut dir = OutputDir::create(out)?;
    if cfg.seeds.is_empty() {
        return finish(dir, "stability_manifest.json", manifest);
    }
    let start = Instant::now();
    let problem = synthetic_problem_with(&ProblemOptions {
        n: p.n,
        seed: p.problem_seed,
        noise: p.noise,
        targets_before_normalization: p.targets_before_normalization,
    })?;
    let sweep = SweepConfig {
        widths: p.widths.clone(),
        depths: p.depths.clone(),
        seeds: cfg.seeds.clone(),
        k: p.k,
        gram: p.gram,
        deviation: p.deviation,
        deep_bias: p.deep_bias,
        max_deep_width: p.max_deep_width,
        analytic_lambda0: p.analytic_lambda0,
    };
    let cells = width_sweep(&sweep, &problem)?;
    manifest.time("sweep", start.elapsed().as_secs_f64());
    for c in &cells {
        if let Some(e) = &c.error {
            manifest.failures.push(super::manifest::Incident {
                cell: cell_key(&[("depth", c.depth.to_string()), ("width", c.width.to_string()), ("seed", c.seed.to_string())]),
                kind: "cell".into(),
                message: e.clone(),
            });
        }
    }
    let rows = cells.iter().map(stability_row).collect::<Result<Vec<_>>>()?;
    dir.write("stability_report.csv", &csv_bytes(&rows, &[])?)?;
    let long = long_format(&cells)?;
    dir.write("stability_long.csv", &csv_bytes(&long, &["depth", "width", "seed", "statistic", "value"])?)?;
    let pooled: Vec<PlotRow> = long
        .iter()
        .filter_map(|r| {
            let stat = if r.statistic.starts_with("c_prime_") && r.statistic[8..].parse::<usize>().is_ok() {
                "c_prime"
            } else if r.statistic.starts_with("deviation_") && r.statistic[10..].parse::<usize>().is_ok() {
                "deviation"
            } else if r.statistic == "lambda_min" {
                "lambda_min"
            } else {
                return None;
            };
            Some(PlotRow {
                experiment: "diagnose".into(),
                cell: cell_key(&[("depth", r.depth.to_string()), ("width", r.width.to_string())]),
                statistic: stat.into(),
                value: r.value,
            })
        })
        .collect();
    let agg = aggregate(&pooled)?;
    dir.write("plot_data.csv", &emit_plot_data(&agg)?)?;
    if p.svg {
        for stat in ["lambda_min", "c_prime", "deviation"] {
            let series: Vec<Series> = p
                .depths
                .iter()
                .map(|&d| Series {
                    label: format!("L={d}"),
                    points: p
                        .widths
                        .iter()
                        .filter_map(|&w| {
                            let cell = cell_key(&[("depth", d.to_string()), ("width", w.to_string())]);
                            agg.iter()
                                .find(|r| r.cell == cell && r.statistic == format!("{stat}_median"))
                                .map(|r| (w as f64, r.value))
                        })
                        .collect(),
                })
                .collect();
            dir.write(&format!("{stat}.svg"), line_chart_svg(&format!("median {stat}"), &series, true, true).as_bytes())?;
        }
    }
    finish(dir, "stability_manifest.json", manifest)
}

fn bandit_data(p: &BanditParams) -> Result<LabeledData> {
    match &p.dataset {
        Some(path) => load_tabular_csv(&resolve_data_path(path), &p.schema)?.to_labeled(),
        None => match p.synthetic {
            SyntheticTabular::MagicLike => magic_like(p.rows, 0),
            SyntheticTabular::LetterLike => letter_like(p.rows, 0),
        },
    }
}

/// Surrogate network, initial parameters and training recipe for one seed.
pub fn bandit_surrogate(p: &BanditParams, feature_dim: usize, schedule: &Schedule, seed: u64) -> Result<LaplaceSurrogate> {
    let mut widths = vec![feature_dim];
    widths.extend(std::iter::repeat_n(p.width, p.hidden_layers));
    widths.push(1);
    let spec = NetworkSpec::mlp(&widths, p.parametrization, true)?;
    let theta0 = init_params(&spec, &InitConfig::gaussian(rng::derive_seed(seed, "init", &[])))?;
    let train_cfg = TrainConfig::adamw(p.lr, p.weight_decay, p.batch_size, p.epochs, Loss::Mse, rng::derive_seed(seed, "shuffle", &[]));
    let (tune, noise) = match schedule {
        Schedule::MlPosthoc => (Some(TuneMode::posthoc()), p.tune_noise),
        Schedule::MlOnline => (Some(TuneMode::Online), p.tune_noise),
        _ => (None, false),
    };
    Ok(LaplaceSurrogate::new(spec, theta0, train_cfg, p.prior_precision, tune)?.with_noise_tuning(noise))
}

/// One bandit run for `(schedule, seed)` on `data`.
pub fn bandit_run(p: &BanditParams, data: &LabeledData, schedule: &Schedule, seed: u64) -> Result<RegretTrace> {
    let env = make_bandit_env(data, p.rounds, seed)?;
    let mut model = bandit_surrogate(p, env.feature_dim(), schedule, seed)?;
    let cfg = BanditConfig {
        rounds: p.rounds,
        warmup: p.warmup,
        retrain_every: p.retrain_every,
        seed,
    };
    run_bandit(&env, &mut model, schedule, &cfg)
}

#[derive(Serialize)]
struct RegretRow<'a> {
    t: usize,
    seed: u64,
    schedule: &'a str,
    #[serde(rename = "R")]
    r: f64,
}

#[derive(Serialize)]
struct GammaRow<'a> {
    t: usize,
    seed: u64,
    schedule: &'a str,
    gamma: f64,
    prior_precision: f64,
    arm: usize,
    reward: f64,
    retrained: bool,
}

#[derive(Serialize)]
struct BanditSummaryRow<'a> {
    schedule: &'a str,
    seed: u64,
    rounds: usize,
    final_regret: f64,
    aborted: Option<&'a str>,
}

/// Every configured schedule on every seed.
pub fn run_bandit_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<RunOutcome> {
    let p = cfg.bandit.as_ref().ok_or_else(|| Error::Config("missing [bandit] block".into()))?;
    let schedules = p.parsed_schedules()?;
    let mut manifest = RunManifest::new("bandit", &cfg.hash()?, &cfg.seeds);
    let mut dir = OutputDir::create(out)?;
    if cfg.seeds.is_empty() {
        return finish(dir, "bandit_manifest.json", manifest);
    }
    let data = bandit_data(p)?;
    let jobs: Vec<(usize, u64)> = (0..schedules.len()).flat_map(|s| cfg.seeds.iter().map(move |&seed| (s, seed))).collect();
    let results: Vec<(Result<RegretTrace>, f64)> = jobs
        .par_iter()
        .map(|&(s, seed)| {
            let start = Instant::now();
            (bandit_run(p, &data, &schedules[s], seed), start.elapsed().as_secs_f64())
        })
        .collect();
    let (mut regret, mut gamma, mut summary, mut plot) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let names: Vec<String> = schedules.iter().map(|s| s.to_string()).collect();
    let mut traces = Vec::new();
    for (&(s, seed), (res, secs)) in jobs.iter().zip(results) {
        let cell = cell_key(&[("schedule", names[s].clone()), ("seed", seed.to_string())]);
        manifest.time(&cell, secs);
        match res {
            Ok(trace) => {
                if let Some(msg) = &trace.aborted {
                    manifest.failures.push(super::manifest::Incident {
                        cell: cell.clone(),
                        kind: "aborted".into(),
                        message: msg.clone(),
                    });
                }
                traces.push((s, seed, trace));
            }
            Err(e) => manifest.failure(cell, &e),
        }
    }
    for (s, seed, trace) in &traces {
        let name = names[*s].as_str();
        let curve = cumulative_regret(trace);
        for (t, &r) in curve.iter().enumerate() {
            regret.push(RegretRow { t, seed: *seed, schedule: name, r });
            if t % 10 == 0 || t == curve.len() - 1 {
                plot.push(PlotRow {
                    experiment: "bandit".into(),
                    cell: cell_key(&[("schedule", name.to_string()), ("t", t.to_string())]),
                    statistic: "regret".into(),
                    value: r,
                });
            }
        }
        for t in 0..trace.len() {
            gamma.push(GammaRow {
                t: t + 1,
                seed: *seed,
                schedule: name,
                gamma: trace.gammas[t],
                prior_precision: trace.prior_precision[t],
                arm: trace.arms[t],
                reward: trace.rewards[t],
                retrained: trace.retrained[t],
            });
        }
        summary.push(BanditSummaryRow {
            schedule: name,
            seed: *seed,
            rounds: trace.len(),
            final_regret: trace.final_regret(),
            aborted: trace.aborted.as_deref(),
        });
    }
    dir.write("regret_trace.csv", &csv_bytes(&regret, &["t", "seed", "schedule", "R"])?)?;
    dir.write("gamma_trace.csv", &csv_bytes(&gamma, &["t", "seed", "schedule", "gamma", "prior_precision", "arm", "reward", "retrained"])?)?;
    dir.write("bandit_summary.csv", &csv_bytes(&summary, &["schedule", "seed", "rounds", "final_regret", "aborted"])?)?;
    let agg = aggregate(&plot)?;
    dir.write("plot_data.csv", &emit_plot_data(&agg)?)?;
    if p.svg {
        let series: Vec<Series> = names
            .iter()
            .map(|n| Series {
                label: n.clone(),
                points: agg
                    .iter()
                    .filter(|r| r.statistic == "regret_median" && r.cell.starts_with(&format!("schedule={n};")))
                    .filter_map(|r| r.cell.rsplit("t=").next()?.parse::<f64>().ok().map(|t| (t, r.value)))
                    .collect(),
            })
            .collect();
        dir.write("regret.svg", line_chart_svg("median cumulative regret", &series, false, false).as_bytes())?;
    }
    finish(dir, "bandit_manifest.json", manifest)
}

fn continual_base(p: &ContinualParams) -> Result<ImageSplits> {
    match &p.idx {
        Some(f) => {
            let train = load_idx_images(&resolve_data_path(&f.train_images), &resolve_data_path(&f.train_labels))?;
            let test = load_idx_images(&resolve_data_path(&f.test_images), &resolve_data_path(&f.test_labels))?;
            Ok(ImageSplits {
                train: train.head(p.train_per_task),
                test: test.head(p.test_per_task),
            })
        }
        None => synthetic_digit_splits(p.train_per_task, p.test_per_task, p.side, 0),
    }
}

/// Task sequence described by the parameters.
pub fn continual_tasks(p: &ContinualParams) -> Result<TaskSequence> {
    let base = continual_base(p)?;
    match p.tasks {
        TaskKind::Rotated => rotated_task_sequence(&base, &p.angles),
        TaskKind::Split => split_task_sequence(&base, p.classes_per_task),
    }
}

/// Network, initialization and per-seed recipe of one continual cell.
pub fn continual_run(p: &ContinualParams, tasks: &TaskSequence, width: usize, seed: u64) -> Result<crate::continual::SequentialRun> {
    let first = tasks.tasks.first().ok_or_else(|| Error::Config("no tasks".into()))?;
    let spec = NetworkSpec::mlp(&[first.train.x.cols(), width, first.train.num_classes], p.parametrization, true)?;
    let mut init = InitConfig::gaussian(rng::derive_seed(seed, "init", &[width as u64]));
    init.nu = p.nu;
    let theta0 = init_params(&spec, &init)?;
    let train_cfg = TrainConfig::sgd(
        p.lr,
        p.momentum,
        p.weight_decay,
        p.batch_size,
        p.epochs,
        Loss::CrossEntropy,
        rng::derive_seed(seed, "shuffle", &[width as u64]),
    );
    train_sequential(&spec, &theta0, tasks, &train_cfg)
}

#[derive(Serialize)]
struct MetricsRow {
    width: usize,
    seed: u64,
    average_forgetting: Option<f64>,
    average_forgetting_inclusive: Option<f64>,
    average_accuracy: Option<f64>,
    learning_accuracy: Option<f64>,
    param_distance: Option<f64>,
    aborted: Option<String>,
}

/// Width sweep of sequential fine-tuning.
pub fn run_continual(cfg: &ExperimentConfig, out: &Path) -> Result<RunOutcome> {
    let p = cfg.continual.as_ref().ok_or_else(|| Error::Config("missing [continual] block".into()))?;
    let mut manifest = RunManifest::new("continual", &cfg.hash()?, &cfg.seeds);
    let mut dir = OutputDir::create(out)?;
    if cfg.seeds.is_empty() {
        return finish(dir, "continual_manifest.json", manifest);
    }
    let tasks = continual_tasks(p)?;
    let jobs: Vec<(usize, u64)> = p.widths.iter().flat_map(|&w| cfg.seeds.iter().map(move |&s| (w, s))).collect();
    let results: Vec<(Result<crate::continual::SequentialRun>, f64)> = jobs
        .par_iter()
        .map(|&(w, s)| {
            let start = Instant::now();
            (continual_run(p, &tasks, w, s), start.elapsed().as_secs_f64())
        })
        .collect();
    let mut rows = Vec::new();
    let mut plot = Vec::new();
    for (&(width, seed), (res, secs)) in jobs.iter().zip(results) {
        let cell = cell_key(&[("width", width.to_string()), ("seed", seed.to_string())]);
        manifest.time(&cell, secs);
        let run = match res {
            Ok(run) => run,
            Err(e) => {
                manifest.failure(cell, &e);
                continue;
            }
        };
        let mut bytes = Vec::new();
        run.accuracy.write_csv(&mut bytes)?;
        dir.write(&format!("accuracy_matrix_{width}_{seed}.csv"), &bytes)?;
        if let Some(msg) = &run.aborted {
            manifest.failures.push(super::manifest::Incident {
                cell: cell.clone(),
                kind: "aborted".into(),
                message: msg.clone(),
            });
        }
        let metrics = match ContinualMetrics::compute(&run.accuracy, run.w_0.values(), run.w_t.values()) {
            Ok(m) => Some(m),
            Err(e) => {
                manifest.incident(&cell, e.kind(), e.to_string());
                None
            }
        };
        if let Some(m) = &metrics {
            for (stat, v) in [
                ("average_forgetting", m.average_forgetting),
                ("average_forgetting_inclusive", m.average_forgetting_inclusive),
                ("average_accuracy", m.average_accuracy),
                ("learning_accuracy", m.learning_accuracy),
                ("param_distance", m.param_distance),
            ] {
                plot.push(PlotRow {
                    experiment: "continual".into(),
                    cell: cell_key(&[("width", width.to_string())]),
                    statistic: stat.into(),
                    value: v,
                });
            }
        }
        rows.push(MetricsRow {
            width,
            seed,
            average_forgetting: metrics.as_ref().map(|m| m.average_forgetting),
            average_forgetting_inclusive: metrics.as_ref().map(|m| m.average_forgetting_inclusive),
            average_accuracy: metrics.as_ref().map(|m| m.average_accuracy),
            learning_accuracy: metrics.as_ref().map(|m| m.learning_accuracy),
            param_distance: metrics.as_ref().map(|m| m.param_distance),
            aborted: run.aborted.clone(),
        });
    }
    dir.write("continual_metrics.csv", &csv_bytes(&rows, &[])?)?;
    let agg = aggregate(&plot)?;
    dir.write("plot_data.csv", &emit_plot_data(&agg)?)?;
    if p.svg {
        let series: Vec<Series> = ["average_forgetting", "average_accuracy", "param_distance"]
            .iter()
            .map(|stat| Series {
                label: stat.to_string(),
                points: p
                    .widths
                    .iter()
                    .filter_map(|&w| {
                        let cell = cell_key(&[("width", w.to_string())]);
                        agg.iter()
                            .find(|r| r.cell == cell && r.statistic == format!("{stat}_median"))
                            .map(|r| (w as f64, r.value))
                    })
                    .collect(),
            })
            .collect();
        dir.write("continual.svg", line_chart_svg("median over seeds", &series, true, false).as_bytes())?;
    }
    finish(dir, "continual_manifest.json", manifest)
}

/// 1-D regression data for the Figure-1 comparison: `n` inputs on
/// `[-1, -0.3] U [0.3, 1]` (the gap is where bands should widen) and
/// targets `sin(3x) + 0.05 eps`.
pub fn figure1_data(n: usize, seed: u64) -> Result<(Matrix, Vec<f64>)> {
    let mut g = rng::named_stream(seed, "figure1-data", &[]);
    let mut xs: Vec<f64> = (0..n)
        .map(|i| {
            let u: f64 = rand::Rng::random(&mut g);
            let side = if i % 2 == 0 { -1.0 } else { 1.0 };
            side * (0.3 + 0.7 * u)
        })
        .collect();
    xs.sort_by(f64::total_cmp);
    let y = xs.iter().map(|&x| (3.0 * x).sin() + 0.05 * rng::standard_normal(&mut g)).collect();
    Ok((Matrix::from_vec(n, 1, xs)?, y))
}

/// One Figure-1 panel: analytic NTK-GP, eNTK-LLA at trained parameters and
/// the trained network on an input grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Figure1Panel {
    pub width: usize,
    pub gp_mean: Vec<f64>,
    pub gp_std: Vec<f64>,
    pub lla_mean: Vec<f64>,
    pub lla_std: Vec<f64>,
    pub net: Vec<f64>,
    /// LLA mean minus network output at the training inputs.
    pub train_gap: f64,
    /// Largest `|mean - y|` at the training inputs of the noiseless GP.
    pub gp_interpolation_error: f64,
}

pub fn figure1_grid(points: usize) -> Matrix {
    Matrix::from_fn(points, 1, |i, _| -1.5 + 3.0 * i as f64 / (points - 1) as f64)
}

pub fn figure1_panel(p: &Figure1Params, x: &Matrix, y: &[f64], width: usize, seed: u64) -> Result<Figure1Panel> {
    let grid = figure1_grid(p.grid_points);
    let mut widths = vec![1];
    widths.extend(std::iter::repeat_n(width, p.depth - 1));
    widths.push(1);
    let mut spec = NetworkSpec::mlp(&widths, Parametrization::Ntp, true)?;
    spec.bias_scale = p.beta2.sqrt();
    let ntk = AnalyticNtk::new(p.depth, p.beta2);
    let k_train = ntk.gram(x, x)?;
    let gp = gp_posterior(&k_train, y, &vec![0.0; y.len()], p.noise, &JitterPolicy::default())?;
    let k_grid = ntk.gram(&grid, x)?;
    let gp_mean = gp.mean(&k_grid, &vec![0.0; grid.rows()])?;
    let diag: Vec<f64> = (0..grid.rows()).map(|i| ntk.eval(grid.row(i), grid.row(i)).map(|(_, t)| t)).collect::<Result<_>>()?;
    let gp_std = gp.variance(&k_grid, &diag)?.into_iter().map(|v| v.max(0.0).sqrt()).collect();
    let noiseless = gp_posterior(&k_train, y, &vec![0.0; y.len()], 0.0, &JitterPolicy::default())?;
    let gp_train = noiseless.mean(&k_train, &vec![0.0; y.len()])?;
    let gp_interpolation_error = gp_train.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let theta0 = init_params(&spec, &InitConfig::gaussian(rng::derive_seed(seed, "init", &[width as u64])))?;
    let targets = Matrix::from_vec(y.len(), 1, y.to_vec())?;
    let cfg = TrainConfig::adamw(p.lr, 0.0, y.len(), p.epochs, Loss::Mse, rng::derive_seed(seed, "shuffle", &[width as u64]));
    let trained = train(&spec, &theta0, &Dataset::regression(x.clone(), targets), &cfg)?;
    let net = forward(&spec, &trained.params, &grid)?.into_vec();
    let lla_noise = p.noise.max(1e-6);
    let post = fit_laplace(&spec, &trained.params, x, y, p.prior_precision, lla_noise, LaplaceForm::Kernel)?;
    let lla_mean = post.mean(&grid)?;
    let lla_std = post.predictive_variance(&grid)?.into_iter().map(f64::sqrt).collect();
    let at_train = post.mean(x)?;
    let net_train = forward(&spec, &trained.params, x)?.into_vec();
    let train_gap = at_train.iter().zip(&net_train).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(Figure1Panel {
        width,
        gp_mean,
        gp_std,
        lla_mean,
        lla_std,
        net,
        train_gap,
        gp_interpolation_error,
    })
}

/// Analytic GP versus finite-width LLA at one width and ten times it.
pub fn run_figure1(cfg: &ExperimentConfig, out: &Path) -> Result<RunOutcome> {
    let p = cfg.figure1.as_ref().ok_or_else(|| Error::Config("missing [figure1] block".into()))?;
    let mut manifest = RunManifest::new("figure1", &cfg.hash()?, &cfg.seeds);
    let mut dir = OutputDir::create(out)?;
    let mut widths = vec![p.width];
    if p.width_multiplier > 1 {
        widths.push(p.width * p.width_multiplier);
    }
    let grid = figure1_grid(p.grid_points);
    for &seed in &cfg.seeds {
        let (x, y) = figure1_data(p.n, seed)?;
        let mut train_csv = csv::Writer::from_writer(Vec::new());
        train_csv.write_record(["x", "y"])?;
        for (xi, yi) in x.data().iter().zip(&y) {
            train_csv.write_record([xi.to_string(), yi.to_string()])?;
        }
        dir.write(&format!("figure1_train_{seed}.csv"), &train_csv.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;
        let mut panels = Vec::new();
        for &w in &widths {
            let start = Instant::now();
            match figure1_panel(p, &x, &y, w, seed) {
                Ok(panel) => panels.push(panel),
                Err(e) => manifest.failure(cell_key(&[("width", w.to_string()), ("seed", seed.to_string())]), &e),
            }
            manifest.time(cell_key(&[("width", w.to_string()), ("seed", seed.to_string())]), start.elapsed().as_secs_f64());
        }
        let Some(first) = panels.first() else { continue };
        let mut header = vec!["x".to_string(), "gp_mean".into(), "gp_lower".into(), "gp_upper".into()];
        for (k, panel) in panels.iter().enumerate() {
            let sfx = if k == 0 { String::new() } else { format!("_x{}", panel.width / p.width) };
            for col in ["lla_mean", "lla_lower", "lla_upper", "net"] {
                header.push(format!("{col}{sfx}"));
            }
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&header)?;
        for i in 0..grid.rows() {
            let mut rec = vec![
                grid.get(i, 0).to_string(),
                first.gp_mean[i].to_string(),
                (first.gp_mean[i] - 2.0 * first.gp_std[i]).to_string(),
                (first.gp_mean[i] + 2.0 * first.gp_std[i]).to_string(),
            ];
            for panel in &panels {
                rec.push(panel.lla_mean[i].to_string());
                rec.push((panel.lla_mean[i] - 2.0 * panel.lla_std[i]).to_string());
                rec.push((panel.lla_mean[i] + 2.0 * panel.lla_std[i]).to_string());
                rec.push(panel.net[i].to_string());
            }
            w.write_record(&rec)?;
        }
        dir.write(&format!("figure1_{seed}.csv"), &w.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;
        for panel in &panels {
            manifest.incident(
                cell_key(&[("width", panel.width.to_string()), ("seed", seed.to_string())]),
                "check",
                format!(
                    "noiseless gp interpolation error {:e}, lla-vs-net gap at train inputs {:e}",
                    panel.gp_interpolation_error, panel.train_gap
                ),
            );
        }
        if p.svg {
            let xs: Vec<f64> = (0..grid.rows()).map(|i| grid.get(i, 0)).collect();
            let line = |label: &str, v: &[f64]| Series {
                label: label.into(),
                points: xs.iter().copied().zip(v.iter().copied()).collect(),
            };
            let band = |m: &[f64], s: &[f64], k: f64| m.iter().zip(s).map(|(a, b)| a + k * b).collect::<Vec<_>>();
            let mut series = vec![
                line("gp mean", &first.gp_mean),
                line("gp +2sd", &band(&first.gp_mean, &first.gp_std, 2.0)),
                line("gp -2sd", &band(&first.gp_mean, &first.gp_std, -2.0)),
            ];
            for panel in &panels {
                series.push(line(&format!("lla m={}", panel.width), &panel.lla_mean));
                series.push(line(&format!("lla +2sd m={}", panel.width), &band(&panel.lla_mean, &panel.lla_std, 2.0)));
                series.push(line(&format!("lla -2sd m={}", panel.width), &band(&panel.lla_mean, &panel.lla_std, -2.0)));
            }
            dir.write(&format!("figure1_{seed}.svg"), line_chart_svg("NTK-GP vs eNTK-LLA", &series, false, false).as_bytes())?;
        }
    }
    finish(dir, "figure1_manifest.json", manifest)
}
