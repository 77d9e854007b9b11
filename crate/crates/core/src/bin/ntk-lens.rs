use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ntk_lens::harness::config::{ContinualParams, DiagnoseParams, Precision, SyntheticTabular};
use ntk_lens::harness::{parse_seed_list, run_experiment, ExperimentConfig, ExperimentKind, Overrides};
use ntk_lens::Error;

#[derive(Parser)]
#[command(name = "ntk-lens", version, about = "Neural tangent kernel experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seed list, e.g. `0,1,2`.
    #[arg(long)]
    seeds: Option<String>,
    /// Only `f64` is implemented.
    #[arg(long)]
    precision: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Width sweep of the fast-convergence conditions.
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        widths: Option<String>,
        #[arg(long)]
        depths: Option<String>,
        /// Number of training points.
        #[arg(long)]
        n: Option<usize>,
        /// Perturbations per cell.
        #[arg(long)]
        k: Option<usize>,
        /// Deviation method: auto, dense, power or gram.
        #[arg(long)]
        method: Option<String>,
    },
    /// Contextual bandit regret under exploration schedules.
    Bandit {
        #[command(flatten)]
        common: Common,
        /// Tabular CSV; resolved against NTK_LENS_DATA when relative.
        #[arg(long, conflicts_with = "synthetic")]
        dataset: Option<PathBuf>,
        /// Synthetic stand-in: magic-like or letter-like.
        #[arg(long)]
        synthetic: Option<String>,
        /// Schedule spec, repeatable: `constant:0.1`, `ntk-theory:m=100,L=3`, `ml-online`.
        #[arg(long = "schedule")]
        schedules: Vec<String>,
        /// Rounds T.
        #[arg(long)]
        rounds: Option<usize>,
    },
    /// Sequential fine-tuning on rotated or split digits.
    Continual {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        widths: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Comma-separated rotation angles in degrees.
        #[arg(long)]
        angles: Option<String>,
        #[arg(long)]
        train_per_task: Option<usize>,
        #[arg(long)]
        test_per_task: Option<usize>,
    },
    /// Analytic NTK-GP against finite-width LLA on 1-D data.
    Figure1 {
        #[command(flatten)]
        common: Common,
    },
}

fn list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, Error> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| Error::Config(format!("bad {what} entry '{t}'"))))
        .collect()
}

fn keyword<T: serde::de::DeserializeOwned>(s: &str, what: &str) -> Result<T, Error> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| Error::Config(format!("unknown {what} '{s}'")))
}

fn load(kind: ExperimentKind, common: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::with_defaults(kind),
    };
    cfg.apply(&Overrides {
        out: common.out.clone(),
        seeds: common.seeds.as_deref().map(parse_seed_list).transpose()?,
    });
    if let Some(p) = &common.precision {
        cfg.precision = keyword::<Precision>(p, "precision")?;
    }
    Ok(cfg)
}

fn build(cli: Cli) -> Result<ExperimentConfig, Error> {
    let cfg = match cli.command {
        Command::Diagnose { common, widths, depths, n, k, method } => {
            let mut cfg = load(ExperimentKind::Diagnose, &common)?;
            if cfg.kind == ExperimentKind::Diagnose {
                let p = cfg.diagnose.get_or_insert_with(DiagnoseParams::default);
                if let Some(w) = widths {
                    p.widths = list(&w, "width")?;
                }
                if let Some(d) = depths {
                    p.depths = list(&d, "depth")?;
                }
                if let Some(n) = n {
                    p.n = n;
                }
                if let Some(k) = k {
                    p.k = k;
                }
                if let Some(m) = method {
                    p.deviation = keyword(&m, "method")?;
                }
            }
            cfg.validate(ExperimentKind::Diagnose)?;
            cfg
        }
        Command::Bandit { common, dataset, synthetic, schedules, rounds } => {
            let mut cfg = load(ExperimentKind::Bandit, &common)?;
            if cfg.kind == ExperimentKind::Bandit {
                let p = cfg.bandit.get_or_insert_with(Default::default);
                if let Some(d) = dataset {
                    p.dataset = Some(d);
                }
                if let Some(s) = synthetic {
                    p.dataset = None;
                    p.synthetic = keyword::<SyntheticTabular>(&s, "synthetic dataset")?;
                }
                if !schedules.is_empty() {
                    p.schedules = schedules;
                }
                if let Some(t) = rounds {
                    p.rounds = t;
                }
            }
            cfg.validate(ExperimentKind::Bandit)?;
            cfg
        }
        Command::Continual { common, widths, epochs, angles, train_per_task, test_per_task } => {
            let mut cfg = load(ExperimentKind::Continual, &common)?;
            if cfg.kind == ExperimentKind::Continual {
                let p = cfg.continual.get_or_insert_with(ContinualParams::default);
                if let Some(w) = widths {
                    p.widths = list(&w, "width")?;
                }
                if let Some(e) = epochs {
                    p.epochs = e;
                }
                if let Some(a) = angles {
                    p.angles = list(&a, "angle")?;
                }
                if let Some(n) = train_per_task {
                    p.train_per_task = n;
                }
                if let Some(n) = test_per_task {
                    p.test_per_task = n;
                }
            }
            cfg.validate(ExperimentKind::Continual)?;
            cfg
        }
        Command::Figure1 { common } => {
            let mut cfg = load(ExperimentKind::Figure1, &common)?;
            cfg.validate(ExperimentKind::Figure1)?;
            cfg
        }
    };
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let cfg = match build(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(1);
        }
    };
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(cfg.kind.name()));
    match run_experiment(&cfg, &out) {
        Ok(outcome) => {
            let m = &outcome.manifest;
            println!("{}: {} files in {}", cfg.kind.name(), m.files.len(), out.display());
            if outcome.partial {
                for f in &m.failures {
                    eprintln!("failed {}: {}", f.cell, f.message);
                }
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e @ (Error::Config(_) | Error::Parse { .. })) => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("run failed: {e}");
            ExitCode::from(2)
        }
    }
}
