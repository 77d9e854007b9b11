//! Exploration schedules and the UCB action rule.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Constants of the NeuralUCB confidence width. `lambda` is the ridge
/// regularizer, `nu` the sub-Gaussian noise scale, `s` the norm bound,
/// `eta` and `j` the gradient-descent step size and step count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NtkTheoryParams {
    pub m: f64,
    #[serde(rename = "L")]
    pub depth: f64,
    pub delta: f64,
    pub lambda: f64,
    #[serde(rename = "S")]
    pub s: f64,
    pub nu: f64,
    pub eta: f64,
    #[serde(rename = "J")]
    pub j: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl Default for NtkTheoryParams {
    fn default() -> Self {
        NtkTheoryParams {
            m: 100.0,
            depth: 3.0,
            delta: 0.1,
            lambda: 1.0,
            s: 1.0,
            nu: 1.0,
            eta: 1e-4,
            j: 1000.0,
            c1: 1.0,
            c2: 1.0,
            c3: 1.0,
        }
    }
}

impl NtkTheoryParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [("m", self.m), ("L", self.depth), ("lambda", self.lambda)];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("ntk-theory parameter {name} = {v} must be positive")));
            }
        }
        if self.m < 1.0 {
            return Err(Error::Config("ntk-theory width m must be at least 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("ntk-theory delta = {} must lie in (0, 1)", self.delta)));
        }
        let nonneg = [("S", self.s), ("nu", self.nu), ("eta", self.eta), ("J", self.j), ("C1", self.c1), ("C2", self.c2), ("C3", self.c3)];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("ntk-theory parameter {name} = {v} must be non-negative")));
            }
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: f64) -> Result<()> {
        let slot = match key {
            "m" => &mut self.m,
            "L" => &mut self.depth,
            "delta" => &mut self.delta,
            "lambda" => &mut self.lambda,
            "S" => &mut self.s,
            "nu" => &mut self.nu,
            "eta" => &mut self.eta,
            "J" => &mut self.j,
            "C1" => &mut self.c1,
            "C2" => &mut self.c2,
            "C3" => &mut self.c3,
            _ => return Err(Error::Config(format!("unknown ntk-theory parameter '{key}'"))),
        };
        *slot = value;
        Ok(())
    }
}

/// NeuralUCB confidence width
///
/// ```text
/// g_t = sqrt(1 + C1 m^{-1/6} sqrt(log m) L^4 t^{7/6} lambda^{-7/6})
///       * (nu sqrt(logdet - 2 log delta + C2 m^{-1/6} sqrt(log m) L^4 t^{5/3} lambda^{-1/6}) + sqrt(lambda) S)
///       + (lambda + C3 t L) ((1 - eta m lambda)^{J/2} sqrt(t / lambda)
///       + m^{-1/6} sqrt(log m) L^{7/2} t^{5/3} lambda^{-5/3} (1 + sqrt(t / lambda)))
/// ```
///
/// where `logdet = log det(I + K / (m lambda))` is the information gain of
/// the observations so far.
pub fn gamma_ntk_theory(t: usize, params: &NtkTheoryParams, logdet: f64) -> Result<f64> {
    params.validate()?;
    if t == 0 {
        return Err(Error::Config("the ntk-theory schedule starts at t = 1".into()));
    }
    if !(logdet.is_finite() && logdet >= 0.0) {
        return Err(Error::Input(format!("information gain {logdet} must be finite and non-negative")));
    }
    let NtkTheoryParams {
        m,
        depth: l,
        delta,
        lambda,
        s,
        nu,
        eta,
        j,
        c1,
        c2,
        c3,
    } = *params;
    let t = t as f64;
    let width = m.powf(-1.0 / 6.0) * m.ln().max(0.0).sqrt();
    let inflate = (1.0 + c1 * width * l.powi(4) * t.powf(7.0 / 6.0) * lambda.powf(-7.0 / 6.0)).sqrt();
    let confidence =
        nu * (logdet - 2.0 * delta.ln() + c2 * width * l.powi(4) * t.powf(5.0 / 3.0) * lambda.powf(-1.0 / 6.0)).sqrt()
            + lambda.sqrt() * s;
    let contraction = (1.0 - eta * m * lambda).abs().powf(j / 2.0);
    let optimization = (lambda + c3 * t * l)
        * (contraction * (t / lambda).sqrt()
            + width * l.powf(3.5) * t.powf(5.0 / 3.0) * lambda.powf(-5.0 / 3.0) * (1.0 + (t / lambda).sqrt()));
    let g = inflate * confidence + optimization;
    if !g.is_finite() {
        return Err(Error::Numeric(format!("ntk-theory schedule overflowed at t = {t}")));
    }
    Ok(g)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    /// Uniform random play; the surrogate is never consulted.
    Random,
    Constant(f64),
    NtkTheory(NtkTheoryParams),
    /// `gamma = 1`, prior precision tuned by evidence grid search after each refit.
    MlPosthoc,
    /// `gamma = 1`, prior precision updated by one evidence fixed-point step per refit.
    MlOnline,
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        match self {
            Schedule::Constant(g) if !(g.is_finite() && *g >= 0.0) => {
                Err(Error::Config(format!("constant exploration {g} must be finite and non-negative")))
            }
            Schedule::NtkTheory(p) => p.validate(),
            _ => Ok(()),
        }
    }

    pub fn uses_model(&self) -> bool {
        !matches!(self, Schedule::Random)
    }

    /// Exploration weight for 1-based round `t`.
    pub fn gamma(&self, t: usize, logdet: f64) -> Result<f64> {
        match self {
            Schedule::Random => Ok(0.0),
            Schedule::Constant(g) => Ok(*g),
            Schedule::NtkTheory(p) => gamma_ntk_theory(t, p, logdet),
            Schedule::MlPosthoc | Schedule::MlOnline => Ok(1.0),
        }
    }
}

impl FromStr for Schedule {
    type Err = Error;

    /// `random`, `constant:0.1`, `ntk-theory:m=100,L=3`, `ml-posthoc`, `ml-online`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, tail) = match s.split_once(':') {
            Some((h, t)) => (h.trim(), Some(t.trim())),
            None => (s, None),
        };
        let schedule = match (head, tail) {
            ("random", None) => Schedule::Random,
            ("ml-posthoc", None) => Schedule::MlPosthoc,
            ("ml-online", None) => Schedule::MlOnline,
            ("constant", Some(v)) => Schedule::Constant(
                v.parse()
                    .map_err(|_| Error::Config(format!("constant schedule needs a number, got '{v}'")))?,
            ),
            ("ntk-theory", tail) => {
                let mut p = NtkTheoryParams::default();
                for kv in tail.unwrap_or("").split(',').map(str::trim).filter(|kv| !kv.is_empty()) {
                    let (k, v) = kv
                        .split_once('=')
                        .ok_or_else(|| Error::Config(format!("expected key=value in '{kv}'")))?;
                    let v: f64 = v
                        .trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("ntk-theory parameter '{k}' needs a number, got '{v}'")))?;
                    p.set(k.trim(), v)?;
                }
                Schedule::NtkTheory(p)
            }
            _ => return Err(Error::Config(format!("unknown schedule '{s}'"))),
        };
        schedule.validate()?;
        Ok(schedule)
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Schedule::Random => write!(f, "random"),
            Schedule::Constant(g) => write!(f, "constant:{g}"),
            Schedule::NtkTheory(p) => write!(f, "ntk-theory:m={},L={}", p.m, p.depth),
            Schedule::MlPosthoc => write!(f, "ml-posthoc"),
            Schedule::MlOnline => write!(f, "ml-online"),
        }
    }
}

/// Relative tolerance under which two utilities count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// `argmax_a mean_a + gamma sqrt(var_a)`; near-ties go to the lowest index.
pub fn ucb_select(means: &[f64], variances: &[f64], gamma: f64) -> Result<usize> {
    if means.len() != variances.len() {
        return Err(Error::Shape(format!("{} means but {} variances", means.len(), variances.len())));
    }
    if means.is_empty() {
        return Err(Error::Selection("no arms to choose from".into()));
    }
    if gamma.is_nan() || gamma < 0.0 {
        return Err(Error::Input(format!("exploration weight {gamma} must be non-negative")));
    }
    if let Some(v) = variances.iter().find(|v| **v < 0.0) {
        return Err(Error::Input(format!("negative predictive variance {v}")));
    }
    let utilities: Vec<f64> = means.iter().zip(variances).map(|(m, v)| m + gamma * v.sqrt()).collect();
    if let Some(i) = utilities.iter().position(|u| !u.is_finite()) {
        return Err(Error::Selection(format!("utility of arm {i} is {}", utilities[i])));
    }
    let mut best = 0;
    for (i, &u) in utilities.iter().enumerate().skip(1) {
        let b = utilities[best];
        if u - b > TIE_TOLERANCE * b.abs().max(1.0) {
            best = i;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ucb_examples() {
        assert_eq!(ucb_select(&[0.2, 0.9], &[1.0, 0.0], 0.0).unwrap(), 1);
        assert_eq!(ucb_select(&[0.3, 0.3], &[0.01, 0.25], 0.5).unwrap(), 1);
        assert_eq!(ucb_select(&[0.5, 0.2], &[0.01, 0.16], 1.0).unwrap(), 0);
        assert!(matches!(ucb_select(&[f64::NAN], &[0.0], 1.0), Err(Error::Selection(_))));
    }

    #[test]
    fn parse_round_trip() {
        for s in ["random", "constant:0.1", "ml-posthoc", "ml-online", "ntk-theory:m=100,L=3"] {
            assert_eq!(s.parse::<Schedule>().unwrap().to_string(), s);
        }
        let p = match "ntk-theory:m=1024,L=2,delta=0.05".parse::<Schedule>().unwrap() {
            Schedule::NtkTheory(p) => p,
            other => panic!("{other:?}"),
        };
        assert_eq!((p.m, p.depth, p.delta), (1024.0, 2.0, 0.05));
        for bad in ["constant", "constant:x", "ntk-theory:q=1", "ntk-theory:delta=2", "greedy"] {
            assert!(matches!(bad.parse::<Schedule>(), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn ntk_theory_overexplores() {
        let p = NtkTheoryParams::default();
        let mut prev = 0.0;
        for t in 1..=300 {
            let g = gamma_ntk_theory(t, &p, 0.0).unwrap();
            assert!(g >= prev);
            prev = g;
        }
        assert!(prev > 10.0);
        let wide = NtkTheoryParams { m: 1000.0, ..p };
        assert!(gamma_ntk_theory(50, &wide, 0.0).unwrap() < gamma_ntk_theory(50, &p, 0.0).unwrap());
    }

    #[test]
    fn zero_scale_drops_norm_term() {
        let p = NtkTheoryParams::default();
        let z = NtkTheoryParams { s: 0.0, ..p };
        let (t, l) = (7.0f64, p.depth);
        let width = p.m.powf(-1.0 / 6.0) * p.m.ln().sqrt();
        let inflate = (1.0 + width * l.powi(4) * t.powf(7.0 / 6.0)).sqrt();
        let diff = gamma_ntk_theory(7, &p, 0.3).unwrap() - gamma_ntk_theory(7, &z, 0.3).unwrap();
        assert!((diff - inflate).abs() < 1e-9 * inflate);
    }
}
