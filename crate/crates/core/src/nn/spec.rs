use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Identity => z,
        }
    }

    /// Derivative, with the ReLU subgradient at 0 taken as 0.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Parametrization {
    /// `W = V / sqrt(fan_in)` in the forward pass, `V ~ N(0, nu^2)`.
    Ntp,
    /// No forward scaling, `W ~ N(0, nu^2 / fan_in)`.
    Sp,
}

/// One affine layer `x -> act(W x + b)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub activation: Activation,
    pub bias: bool,
    pub trainable: bool,
    /// Whether NTP applies the `1/sqrt(fan_in)` factor to this layer.
    pub fan_in_scaling: bool,
}

/// Architecture of a fully connected network with widths `m_0..m_L`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub widths: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub parametrization: Parametrization,
    /// Bias multiplier `beta` (NTP) or bias init scale (SP).
    pub bias_scale: f64,
}

/// Where a layer's weights and bias live in the parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSlot {
    pub trainable: bool,
    pub weight: (usize, usize),
    pub bias: Option<(usize, usize)>,
}

impl NetworkSpec {
    /// ReLU MLP with an identity output layer and every layer trainable.
    pub fn mlp(widths: &[usize], parametrization: Parametrization, bias: bool) -> Result<Self> {
        let depth = widths.len().saturating_sub(1);
        let layers = (0..depth)
            .map(|l| LayerSpec {
                activation: if l + 1 == depth { Activation::Identity } else { Activation::Relu },
                bias,
                trainable: true,
                fan_in_scaling: true,
            })
            .collect();
        let spec = Self {
            widths: widths.to_vec(),
            layers,
            parametrization,
            bias_scale: 1.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `f(x) = (1/sqrt(m)) w2 . relu(W1 x)` with `W1` trainable and `w2` frozen.
    pub fn shallow(input_dim: usize, m: usize) -> Result<Self> {
        let spec = Self {
            widths: vec![input_dim, m, 1],
            layers: vec![
                LayerSpec {
                    activation: Activation::Relu,
                    bias: false,
                    trainable: true,
                    fan_in_scaling: false,
                },
                LayerSpec {
                    activation: Activation::Identity,
                    bias: false,
                    trainable: false,
                    fan_in_scaling: true,
                },
            ],
            parametrization: Parametrization::Ntp,
            bias_scale: 1.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Linear model `f(x) = W x` (single identity layer, no bias).
    pub fn linear(input_dim: usize, output_dim: usize) -> Result<Self> {
        let spec = Self {
            widths: vec![input_dim, output_dim],
            layers: vec![LayerSpec {
                activation: Activation::Identity,
                bias: false,
                trainable: true,
                fan_in_scaling: false,
            }],
            parametrization: Parametrization::Ntp,
            bias_scale: 1.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 {
            return Err(Error::Config("a network needs at least one affine layer".into()));
        }
        if self.layers.len() != self.widths.len() - 1 {
            return Err(Error::Config(format!(
                "{} widths describe {} layers, but {} layer specs were given",
                self.widths.len(),
                self.widths.len() - 1,
                self.layers.len()
            )));
        }
        if let Some(l) = self.widths.iter().position(|&w| w == 0) {
            return Err(Error::Config(format!("width m_{l} must be at least 1")));
        }
        if !self.bias_scale.is_finite() || self.bias_scale < 0.0 {
            return Err(Error::Config(format!("bias scale {} must be finite and non-negative", self.bias_scale)));
        }
        Ok(())
    }

    /// Number of affine layers `L`.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("validated spec")
    }

    pub fn fan_in(&self, l: usize) -> usize {
        self.widths[l]
    }

    pub fn fan_out(&self, l: usize) -> usize {
        self.widths[l + 1]
    }

    fn layer_size(&self, l: usize) -> usize {
        self.fan_out(l) * self.fan_in(l) + if self.layers[l].bias { self.fan_out(l) } else { 0 }
    }

    /// Trainable parameter count `P`.
    pub fn num_params(&self) -> usize {
        (0..self.depth()).filter(|&l| self.layers[l].trainable).map(|l| self.layer_size(l)).sum()
    }

    pub fn num_frozen(&self) -> usize {
        (0..self.depth()).filter(|&l| !self.layers[l].trainable).map(|l| self.layer_size(l)).sum()
    }

    /// Minimum hidden width, or the output width for single-layer networks.
    pub fn min_hidden_width(&self) -> usize {
        let hidden = &self.widths[1..self.widths.len() - 1];
        hidden.iter().copied().min().unwrap_or(self.output_dim())
    }

    /// Forward multiplier of layer `l`'s weights.
    #[inline]
    pub fn weight_multiplier(&self, l: usize) -> f64 {
        match self.parametrization {
            Parametrization::Ntp if self.layers[l].fan_in_scaling => 1.0 / (self.fan_in(l) as f64).sqrt(),
            _ => 1.0,
        }
    }

    /// Forward multiplier of layer `l`'s bias.
    #[inline]
    pub fn bias_multiplier(&self, _l: usize) -> f64 {
        match self.parametrization {
            Parametrization::Ntp => self.bias_scale,
            Parametrization::Sp => 1.0,
        }
    }

    /// Layer-major layout: each layer's weights (row-major `fan_out x fan_in`)
    /// then its bias, in the trainable or frozen segment.
    pub fn layout(&self) -> Vec<LayerSlot> {
        let mut trainable = 0;
        let mut frozen = 0;
        (0..self.depth())
            .map(|l| {
                let cursor = if self.layers[l].trainable { &mut trainable } else { &mut frozen };
                let nw = self.fan_out(l) * self.fan_in(l);
                let weight = (*cursor, *cursor + nw);
                *cursor += nw;
                let bias = if self.layers[l].bias {
                    let b = (*cursor, *cursor + self.fan_out(l));
                    *cursor += self.fan_out(l);
                    Some(b)
                } else {
                    None
                };
                LayerSlot {
                    trainable: self.layers[l].trainable,
                    weight,
                    bias,
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_counts() {
        let s = NetworkSpec::mlp(&[2, 8, 1], Parametrization::Ntp, false).unwrap();
        assert_eq!(s.num_params(), 24);
        let s = NetworkSpec::mlp(&[2, 8, 1], Parametrization::Ntp, true).unwrap();
        assert_eq!(s.num_params(), 24 + 9);
        let s = NetworkSpec::shallow(2, 4).unwrap();
        assert_eq!(s.num_params(), 8);
        assert_eq!(s.num_frozen(), 4);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(NetworkSpec::mlp(&[3], Parametrization::Ntp, true).is_err());
        assert!(NetworkSpec::mlp(&[3, 0, 1], Parametrization::Ntp, true).is_err());
    }

    #[test]
    fn layout_is_contiguous() {
        let s = NetworkSpec::mlp(&[3, 4, 2], Parametrization::Ntp, true).unwrap();
        let slots = s.layout();
        assert_eq!(slots[0].weight, (0, 12));
        assert_eq!(slots[0].bias, Some((12, 16)));
        assert_eq!(slots[1].weight, (16, 24));
        assert_eq!(slots[1].bias, Some((24, 26)));
    }
}
