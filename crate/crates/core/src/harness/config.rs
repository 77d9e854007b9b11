//! Experiment configuration files (TOML) with command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::data::TabularSchema;
use crate::bandit::Schedule;
use crate::diagnostics::{DeviationMethod, GramMethod};
use crate::error::{Error, Result};
use crate::nn::Parametrization;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Diagnose,
    Bandit,
    Continual,
    Figure1,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Diagnose => "diagnose",
            ExperimentKind::Bandit => "bandit",
            ExperimentKind::Continual => "continual",
            ExperimentKind::Figure1 => "figure1",
        }
    }
}

/// Only double precision is implemented.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Precision {
    #[default]
    F64,
    F32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default)]
    pub diagnose: Option<DiagnoseParams>,
    #[serde(default)]
    pub bandit: Option<BanditParams>,
    #[serde(default)]
    pub continual: Option<ContinualParams>,
    #[serde(default)]
    pub figure1: Option<Figure1Params>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseParams {
    pub n: usize,
    pub problem_seed: u64,
    pub noise: f64,
    pub targets_before_normalization: bool,
    pub widths: Vec<usize>,
    pub depths: Vec<usize>,
    pub k: usize,
    pub gram: GramMethod,
    pub deviation: DeviationMethod,
    pub deep_bias: bool,
    pub max_deep_width: usize,
    pub analytic_lambda0: bool,
    pub svg: bool,
}

impl Default for DiagnoseParams {
    fn default() -> Self {
        DiagnoseParams {
            n: 16,
            problem_seed: 0,
            noise: 0.1,
            targets_before_normalization: true,
            widths: (6..=13).map(|e| 1 << e).collect(),
            depths: vec![2],
            k: 5,
            gram: GramMethod::Dense,
            deviation: DeviationMethod::Auto,
            deep_bias: true,
            max_deep_width: 4096,
            analytic_lambda0: true,
            svg: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticTabular {
    MagicLike,
    LetterLike,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BanditParams {
    /// CSV benchmark; the synthetic generator is used when absent.
    pub dataset: Option<PathBuf>,
    pub schema: TabularSchema,
    pub synthetic: SyntheticTabular,
    /// Rows kept from the dataset (first rows after a seeded shuffle).
    pub rows: usize,
    pub rounds: usize,
    pub schedules: Vec<String>,
    pub width: usize,
    pub hidden_layers: usize,
    pub parametrization: Parametrization,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub warmup: usize,
    pub retrain_every: usize,
    pub prior_precision: f64,
    /// Re-estimate the observation noise along with the prior precision in
    /// the marginal-likelihood schedules.
    pub tune_noise: bool,
    pub svg: bool,
}

impl Default for BanditParams {
    fn default() -> Self {
        BanditParams {
            dataset: None,
            schema: TabularSchema::default(),
            synthetic: SyntheticTabular::MagicLike,
            rows: 5000,
            rounds: 2000,
            schedules: ["random", "constant:0.01", "constant:0.1", "constant:1", "constant:10", "ntk-theory:m=100,L=3", "ml-posthoc", "ml-online"]
                .map(String::from)
                .to_vec(),
            width: 100,
            hidden_layers: 2,
            parametrization: Parametrization::Sp,
            epochs: 500,
            batch_size: 128,
            lr: 1e-3,
            weight_decay: 0.01,
            warmup: 10,
            retrain_every: 100,
            prior_precision: 1.0,
            tune_noise: true,
            svg: false,
        }
    }
}

impl BanditParams {
    pub fn parsed_schedules(&self) -> Result<Vec<Schedule>> {
        self.schedules.iter().map(|s| s.parse()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxFiles {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Rotated,
    Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinualParams {
    /// IDX files; synthetic digits when absent.
    pub idx: Option<IdxFiles>,
    /// Side of the synthetic digits.
    pub side: usize,
    pub train_per_task: usize,
    pub test_per_task: usize,
    pub tasks: TaskKind,
    pub angles: Vec<f64>,
    pub classes_per_task: usize,
    pub widths: Vec<usize>,
    pub parametrization: Parametrization,
    pub nu: f64,
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub svg: bool,
}

impl Default for ContinualParams {
    fn default() -> Self {
        ContinualParams {
            idx: None,
            side: 28,
            train_per_task: 10_000,
            test_per_task: 2_000,
            tasks: TaskKind::Rotated,
            angles: crate::continual::default_angles(),
            classes_per_task: 2,
            widths: vec![64, 256, 1024, 4096],
            parametrization: Parametrization::Sp,
            nu: 1.0 / 3f64.sqrt(),
            epochs: 5,
            lr: 1e-4,
            momentum: 0.9,
            weight_decay: 1e-4,
            batch_size: 32,
            svg: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Figure1Params {
    pub n: usize,
    pub depth: usize,
    pub width: usize,
    /// Extra run at `width * width_multiplier`; 1 disables it.
    pub width_multiplier: usize,
    pub noise: f64,
    pub beta2: f64,
    pub grid_points: usize,
    pub epochs: usize,
    pub lr: f64,
    pub prior_precision: f64,
    pub svg: bool,
}

impl Default for Figure1Params {
    fn default() -> Self {
        Figure1Params {
            n: 20,
            depth: 3,
            width: 128,
            width_multiplier: 10,
            noise: 1e-6,
            beta2: 0.1,
            grid_points: 201,
            epochs: 2000,
            lr: 1e-2,
            prior_precision: 1.0,
            svg: false,
        }
    }
}

/// Command-line values that replace file values.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seeds: Option<Vec<u64>>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Fills the block for `kind` with defaults when missing.
    pub fn with_defaults(kind: ExperimentKind) -> Self {
        let mut c = ExperimentConfig {
            kind,
            seeds: vec![0, 1, 2],
            out: None,
            precision: Precision::F64,
            diagnose: None,
            bandit: None,
            continual: None,
            figure1: None,
        };
        c.fill_block();
        c
    }

    fn fill_block(&mut self) {
        match self.kind {
            ExperimentKind::Diagnose => {
                self.diagnose.get_or_insert_with(Default::default);
            }
            ExperimentKind::Bandit => {
                self.bandit.get_or_insert_with(Default::default);
            }
            ExperimentKind::Continual => {
                self.continual.get_or_insert_with(Default::default);
            }
            ExperimentKind::Figure1 => {
                self.figure1.get_or_insert_with(Default::default);
            }
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        if let Some(seeds) = &o.seeds {
            self.seeds = seeds.clone();
        }
    }

    /// Checks everything that can be checked without data or compute, and
    /// fills the experiment's block with defaults when absent.
    pub fn validate(&mut self, expected: ExperimentKind) -> Result<()> {
        if self.kind != expected {
            return Err(Error::Config(format!(
                "config is for '{}' but the '{}' subcommand was used",
                self.kind.name(),
                expected.name()
            )));
        }
        if self.precision != Precision::F64 {
            return Err(Error::Config("only f64 precision is implemented".into()));
        }
        let others = [
            (ExperimentKind::Diagnose, self.diagnose.is_some()),
            (ExperimentKind::Bandit, self.bandit.is_some()),
            (ExperimentKind::Continual, self.continual.is_some()),
            (ExperimentKind::Figure1, self.figure1.is_some()),
        ];
        if let Some((k, _)) = others.iter().find(|(k, present)| *present && *k != self.kind) {
            return Err(Error::Config(format!("[{}] block in a '{}' config", k.name(), self.kind.name())));
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(s) = self.seeds.iter().find(|s| !seen.insert(**s)) {
            return Err(Error::Config(format!("seed {s} listed twice")));
        }
        self.fill_block();
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {v} must be positive")))
            }
        };
        match self.kind {
            ExperimentKind::Diagnose => {
                let d = self.diagnose.as_ref().expect("filled");
                if d.n == 0 {
                    return Err(Error::Config("n must be positive".into()));
                }
                if d.widths.is_empty() || d.depths.is_empty() || d.widths.contains(&0) || d.depths.iter().any(|&l| l < 2) {
                    return Err(Error::Config("widths must be positive, depths at least 2, both non-empty".into()));
                }
                if d.k == 0 {
                    return Err(Error::Config("k must be positive".into()));
                }
            }
            ExperimentKind::Bandit => {
                let b = self.bandit.as_ref().expect("filled");
                b.parsed_schedules()?;
                if b.schedules.is_empty() {
                    return Err(Error::Config("no schedules".into()));
                }
                if b.rounds == 0 || b.rows < b.rounds {
                    return Err(Error::Config(format!("need 0 < rounds <= rows, got rounds {} rows {}", b.rounds, b.rows)));
                }
                if b.width == 0 || b.hidden_layers == 0 || b.batch_size == 0 || b.retrain_every == 0 {
                    return Err(Error::Config("width, hidden_layers, batch_size and retrain_every must be positive".into()));
                }
                positive("lr", b.lr)?;
                positive("prior_precision", b.prior_precision)?;
            }
            ExperimentKind::Continual => {
                let c = self.continual.as_ref().expect("filled");
                if c.widths.is_empty() || c.widths.contains(&0) {
                    return Err(Error::Config("widths must be positive and non-empty".into()));
                }
                if c.train_per_task == 0 || c.test_per_task == 0 || c.batch_size == 0 {
                    return Err(Error::Config("train/test sizes and batch size must be positive".into()));
                }
                if c.tasks == TaskKind::Rotated && c.angles.is_empty() {
                    return Err(Error::Config("rotated tasks need at least one angle".into()));
                }
                if let Some(a) = c.angles.iter().find(|a| !(0.0..360.0).contains(*a)) {
                    return Err(Error::Config(format!("angle {a} outside [0, 360)")));
                }
                positive("lr", c.lr)?;
                positive("nu", c.nu)?;
            }
            ExperimentKind::Figure1 => {
                let f = self.figure1.as_ref().expect("filled");
                if f.n < 2 || f.depth < 2 || f.width == 0 || f.width_multiplier == 0 || f.grid_points < 2 {
                    return Err(Error::Config("figure1 needs n >= 2, depth >= 2, positive width and multiplier, >= 2 grid points".into()));
                }
                if f.noise.is_nan() || f.noise < 0.0 || f.beta2.is_nan() || f.beta2 < 0.0 {
                    return Err(Error::Config("noise and beta2 must be non-negative".into()));
                }
                positive("lr", f.lr)?;
                positive("prior_precision", f.prior_precision)?;
            }
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form of the validated config; the
    /// output directory does not take part.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.out = None;
        let bytes = serde_json::to_vec(&c)?;
        Ok(hex::encode(Sha256::digest(bytes)))
    }
}

/// `"0,1,2"` to seeds.
pub fn parse_seed_list(s: &str) -> Result<Vec<u64>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| Error::Config(format!("bad seed '{t}'"))))
        .collect()
}
