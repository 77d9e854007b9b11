use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::spec::{LayerSlot, NetworkSpec, Parametrization};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightDistribution {
    Gaussian,
    Rademacher,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    pub seed: u64,
    /// Standard-deviation multiplier `nu`.
    pub nu: f64,
    /// Per-layer weight distribution; missing entries default to Gaussian.
    #[serde(default)]
    pub distributions: Vec<WeightDistribution>,
}

impl InitConfig {
    pub fn gaussian(seed: u64) -> Self {
        Self {
            seed,
            nu: 1.0,
            distributions: Vec::new(),
        }
    }

    /// Gaussian first layer, Rademacher readout.
    pub fn shallow(seed: u64) -> Self {
        Self {
            seed,
            nu: 1.0,
            distributions: vec![WeightDistribution::Gaussian, WeightDistribution::Rademacher],
        }
    }

    pub fn distribution(&self, l: usize) -> WeightDistribution {
        self.distributions.get(l).copied().unwrap_or(WeightDistribution::Gaussian)
    }
}

/// Flattened parameters: the trainable vector `theta` plus frozen values.
///
/// Both segments follow [`NetworkSpec::layout`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    values: Vec<f64>,
    frozen: Vec<f64>,
}

impl ParameterVector {
    pub fn new(spec: &NetworkSpec, values: Vec<f64>, frozen: Vec<f64>) -> Result<Self> {
        if values.len() != spec.num_params() || frozen.len() != spec.num_frozen() {
            return Err(Error::Shape(format!(
                "expected {} trainable and {} frozen values, got {} and {}",
                spec.num_params(),
                spec.num_frozen(),
                values.len(),
                frozen.len()
            )));
        }
        Ok(Self { values, frozen })
    }

    pub fn zeros(spec: &NetworkSpec) -> Self {
        Self {
            values: vec![0.0; spec.num_params()],
            frozen: vec![0.0; spec.num_frozen()],
        }
    }

    /// Number of trainable parameters `P`.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn frozen(&self) -> &[f64] {
        &self.frozen
    }

    /// Same frozen values, new trainable vector.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::Shape(format!(
                "expected {} trainable values, got {}",
                self.values.len(),
                values.len()
            )));
        }
        Ok(Self {
            values,
            frozen: self.frozen.clone(),
        })
    }

    fn segment(&self, slot: &LayerSlot) -> &[f64] {
        if slot.trainable {
            &self.values
        } else {
            &self.frozen
        }
    }

    pub fn weights(&self, slot: &LayerSlot) -> &[f64] {
        &self.segment(slot)[slot.weight.0..slot.weight.1]
    }

    pub fn bias(&self, slot: &LayerSlot) -> Option<&[f64]> {
        slot.bias.map(|(a, b)| &self.segment(slot)[a..b])
    }

    /// Splits into per-layer `(weights, bias)` blocks.
    pub fn unflatten(&self, spec: &NetworkSpec) -> Vec<(Vec<f64>, Option<Vec<f64>>)> {
        spec.layout()
            .iter()
            .map(|s| (self.weights(s).to_vec(), self.bias(s).map(<[f64]>::to_vec)))
            .collect()
    }

    /// Inverse of [`unflatten`](Self::unflatten).
    pub fn flatten(spec: &NetworkSpec, layers: &[(Vec<f64>, Option<Vec<f64>>)]) -> Result<Self> {
        let slots = spec.layout();
        if layers.len() != slots.len() {
            return Err(Error::Shape(format!("expected {} layers, got {}", slots.len(), layers.len())));
        }
        let mut out = Self::zeros(spec);
        for (l, (slot, (w, b))) in slots.iter().zip(layers).enumerate() {
            let seg = if slot.trainable { &mut out.values } else { &mut out.frozen };
            if w.len() != slot.weight.1 - slot.weight.0 {
                return Err(Error::Shape(format!("layer {l} weight block has the wrong length")));
            }
            seg[slot.weight.0..slot.weight.1].copy_from_slice(w);
            match (slot.bias, b) {
                (Some((lo, hi)), Some(b)) if b.len() == hi - lo => seg[lo..hi].copy_from_slice(b),
                (None, None) => {}
                _ => return Err(Error::Shape(format!("layer {l} bias block does not match the architecture"))),
            }
        }
        Ok(out)
    }

    /// Writes `kind,index,value` rows with round-trip float formatting.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["kind", "index", "value"])?;
        for (kind, vals) in [("trainable", &self.values), ("frozen", &self.frozen)] {
            for (i, v) in vals.iter().enumerate() {
                out.write_record([kind, &i.to_string(), &format!("{v:?}")])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(spec: &NetworkSpec, r: R) -> Result<Self> {
        let mut values = Vec::new();
        let mut frozen = Vec::new();
        let mut reader = csv::Reader::from_reader(r);
        for (row, rec) in reader.records().enumerate() {
            let rec = rec?;
            let line = row as u64 + 2;
            let parse_err = |column: &str, message: String| Error::Parse {
                line,
                column: column.into(),
                message,
            };
            let kind = rec.get(0).ok_or_else(|| parse_err("kind", "missing".into()))?;
            let index: usize = rec
                .get(1)
                .ok_or_else(|| parse_err("index", "missing".into()))?
                .parse()
                .map_err(|e| parse_err("index", format!("{e}")))?;
            let value: f64 = rec
                .get(2)
                .ok_or_else(|| parse_err("value", "missing".into()))?
                .parse()
                .map_err(|e| parse_err("value", format!("{e}")))?;
            let target = match kind {
                "trainable" => &mut values,
                "frozen" => &mut frozen,
                other => return Err(parse_err("kind", format!("unknown kind {other:?}"))),
            };
            if index != target.len() {
                return Err(parse_err("index", format!("expected index {}, found {index}", target.len())));
            }
            target.push(value);
        }
        Self::new(spec, values, frozen)
    }

    /// Saves the CSV and a `<path>.spec.json` sidecar recording the architecture.
    pub fn save(&self, spec: &NetworkSpec, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)?;
        std::fs::write(sidecar_path(path), serde_json::to_string_pretty(spec)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(NetworkSpec, Self)> {
        let spec: NetworkSpec = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
        spec.validate()?;
        let params = Self::read_csv(&spec, std::fs::File::open(path)?)?;
        Ok((spec, params))
    }
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".spec.json");
    PathBuf::from(s)
}

/// Draws initial parameters.
///
/// A single ChaCha8 stream seeded with `cfg.seed` is consumed layer by layer,
/// weights (row-major) before biases, whether or not the layer is trainable.
pub fn init_params(spec: &NetworkSpec, cfg: &InitConfig) -> Result<ParameterVector> {
    spec.validate()?;
    if !cfg.nu.is_finite() || cfg.nu <= 0.0 {
        return Err(Error::Config(format!("weight scale nu = {} must be positive", cfg.nu)));
    }
    let mut rng = rng::stream(cfg.seed);
    let mut out = ParameterVector::zeros(spec);
    for (l, slot) in spec.layout().iter().enumerate() {
        let dist = cfg.distribution(l);
        let (w_std, b_std) = match spec.parametrization {
            Parametrization::Ntp => (cfg.nu, 1.0),
            Parametrization::Sp => {
                if dist == WeightDistribution::Rademacher {
                    return Err(Error::Config(format!(
                        "layer {l}: rademacher weights are only defined for the NTK parametrization"
                    )));
                }
                let fan_in = spec.fan_in(l) as f64;
                (cfg.nu / fan_in.sqrt(), spec.bias_scale / fan_in.sqrt())
            }
        };
        let seg = if slot.trainable { &mut out.values } else { &mut out.frozen };
        for v in &mut seg[slot.weight.0..slot.weight.1] {
            *v = match dist {
                WeightDistribution::Gaussian => w_std * rng::standard_normal(&mut rng),
                WeightDistribution::Rademacher => w_std * rng::rademacher(&mut rng),
            };
        }
        if let Some((lo, hi)) = slot.bias {
            for v in &mut seg[lo..hi] {
                *v = b_std * rng::standard_normal(&mut rng);
            }
        }
    }
    Ok(out)
}
