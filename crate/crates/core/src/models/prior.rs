use std::fmt;
use std::str::FromStr;

use super::ModelError;
use crate::numerics::RngStream;

/// Marginal prior for one parameter coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriorDist {
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, variance: f64 },
    /// Point mass; used for degenerate test corpora.
    Fixed { value: f64 },
}

impl PriorDist {
    pub fn validate(&self) -> Result<(), ModelError> {
        match *self {
            PriorDist::Uniform { lo, hi } if !(lo < hi) || !lo.is_finite() || !hi.is_finite() => {
                Err(ModelError::InvalidPrior(format!("uniform needs lo < hi, got [{lo}, {hi}]")))
            }
            PriorDist::Normal { mean, variance } if !(variance > 0.0) || !mean.is_finite() => {
                Err(ModelError::InvalidPrior(format!("normal needs variance > 0, got {variance}")))
            }
            PriorDist::Fixed { value } if !value.is_finite() => {
                Err(ModelError::InvalidPrior("fixed value must be finite".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        match *self {
            PriorDist::Uniform { lo, hi } => lo + (hi - lo) * rng.uniform(),
            PriorDist::Normal { mean, variance } => mean + variance.sqrt() * rng.standard_normal(),
            PriorDist::Fixed { value } => value,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            PriorDist::Uniform { lo, hi } => 0.5 * (lo + hi),
            PriorDist::Normal { mean, .. } => mean,
            PriorDist::Fixed { value } => value,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            PriorDist::Uniform { lo, hi } => (hi - lo).powi(2) / 12.0,
            PriorDist::Normal { variance, .. } => variance,
            PriorDist::Fixed { .. } => 0.0,
        }
    }

    /// Support of the distribution (infinite for normal).
    pub fn support(&self) -> (f64, f64) {
        match *self {
            PriorDist::Uniform { lo, hi } => (lo, hi),
            PriorDist::Normal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            PriorDist::Fixed { value } => (value, value),
        }
    }
}

impl fmt::Display for PriorDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PriorDist::Uniform { lo, hi } => write!(f, "uniform {lo:?} {hi:?}"),
            PriorDist::Normal { mean, variance } => write!(f, "normal {mean:?} {variance:?}"),
            PriorDist::Fixed { value } => write!(f, "fixed {value:?}"),
        }
    }
}

impl FromStr for PriorDist {
    type Err = ModelError;

    /// `uniform LO HI`, `normal MEAN VARIANCE` or `fixed VALUE`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split_whitespace().collect();
        let num = |i: usize| -> Result<f64, ModelError> {
            parts
                .get(i)
                .ok_or_else(|| ModelError::InvalidPrior(format!("missing argument in '{s}'")))?
                .parse::<f64>()
                .map_err(|e| ModelError::InvalidPrior(format!("'{s}': {e}")))
        };
        let (dist, arity) = match parts.first().copied() {
            Some("uniform") => (PriorDist::Uniform { lo: num(1)?, hi: num(2)? }, 3),
            Some("normal") => (PriorDist::Normal { mean: num(1)?, variance: num(2)? }, 3),
            Some("fixed") => (PriorDist::Fixed { value: num(1)? }, 2),
            _ => {
                return Err(ModelError::InvalidPrior(format!(
                    "expected 'uniform LO HI', 'normal MEAN VAR' or 'fixed V', got '{s}'"
                )))
            }
        };
        if parts.len() != arity {
            return Err(ModelError::InvalidPrior(format!("trailing arguments in '{s}'")));
        }
        dist.validate()?;
        Ok(dist)
    }
}

/// Independent product prior π(θ) = Πₖ πₖ(θₖ).
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    coords: Vec<PriorDist>,
}

impl PriorSpec {
    pub fn new(coords: Vec<PriorDist>) -> Result<Self, ModelError> {
        if coords.is_empty() {
            return Err(ModelError::InvalidPrior("prior has no coordinates".into()));
        }
        for c in &coords {
            c.validate()?;
        }
        Ok(Self { coords })
    }

    pub fn uniform_box(ranges: &[(f64, f64)]) -> Result<Self, ModelError> {
        Self::new(ranges.iter().map(|&(lo, hi)| PriorDist::Uniform { lo, hi }).collect())
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[PriorDist] {
        &self.coords
    }

    pub fn sample(&self, rng: &mut RngStream) -> Vec<f64> {
        self.coords.iter().map(|c| c.sample(rng)).collect()
    }
}
