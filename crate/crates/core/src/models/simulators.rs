//! Forward models `y ~ p(· | θ)` and the name registry used by configs.

use std::collections::BTreeMap;

use rand_distr::{Binomial, Distribution};

use super::epidemic::{EpidemicScenario, EpidemicSimulator, QuantileTrajectorySimulator};
use super::ModelError;
use crate::numerics::RngStream;

/// A stochastic forward model. Implementations must draw all randomness from
/// the supplied stream so that tables are reproducible.
pub trait Simulator: Send + Sync {
    fn name(&self) -> &str;
    fn theta_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn simulate(&self, theta: &[f64], rng: &mut RngStream) -> Result<Vec<f64>, ModelError>;
}

fn check_theta(sim: &dyn Simulator, theta: &[f64]) -> Result<(), ModelError> {
    if theta.len() != sim.theta_dim() {
        return Err(ModelError::DimensionMismatch {
            expected: sim.theta_dim(),
            found: theta.len(),
        });
    }
    Ok(())
}

/// `y₁, …, yₙ | θ ~ N(θ, σ²)`
#[derive(Debug, Clone, PartialEq)]
pub struct NormalNormalSimulator {
    noise_variance: f64,
    n: usize,
}

impl NormalNormalSimulator {
    pub fn new(noise_variance: f64, n: usize) -> Result<Self, ModelError> {
        if !(noise_variance > 0.0) || !noise_variance.is_finite() {
            return Err(ModelError::InvalidParameter(format!(
                "noise variance must be positive, got {noise_variance}"
            )));
        }
        if n == 0 {
            return Err(ModelError::InvalidParameter("need at least one observation".into()));
        }
        Ok(Self { noise_variance, n })
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// n i.i.d. draws from N(θ, σ²).
pub fn simulate_normal_normal(
    theta: f64,
    noise_variance: f64,
    n: usize,
    rng: &mut RngStream,
) -> Result<Vec<f64>, ModelError> {
    NormalNormalSimulator::new(noise_variance, n)?.simulate(&[theta], rng)
}

impl Simulator for NormalNormalSimulator {
    fn name(&self) -> &str {
        "normal-normal"
    }

    fn theta_dim(&self) -> usize {
        1
    }

    fn output_dim(&self) -> usize {
        self.n
    }

    fn simulate(&self, theta: &[f64], rng: &mut RngStream) -> Result<Vec<f64>, ModelError> {
        check_theta(self, theta)?;
        let sd = self.noise_variance.sqrt();
        Ok((0..self.n).map(|_| theta[0] + sd * rng.standard_normal()).collect())
    }
}

/// θ tiled `copies` times plus independent N(0, noise_sd²) noise.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateSimulator {
    theta_dim: usize,
    copies: usize,
    noise_sd: f64,
}

impl ReplicateSimulator {
    pub fn new(theta_dim: usize, copies: usize, noise_sd: f64) -> Result<Self, ModelError> {
        if theta_dim == 0 || copies == 0 || !(noise_sd >= 0.0) {
            return Err(ModelError::InvalidParameter(
                "replicate simulator needs dims >= 1 and noise_sd >= 0".into(),
            ));
        }
        Ok(Self {
            theta_dim,
            copies,
            noise_sd,
        })
    }
}

impl Simulator for ReplicateSimulator {
    fn name(&self) -> &str {
        "replicate"
    }

    fn theta_dim(&self) -> usize {
        self.theta_dim
    }

    fn output_dim(&self) -> usize {
        self.theta_dim * self.copies
    }

    fn simulate(&self, theta: &[f64], rng: &mut RngStream) -> Result<Vec<f64>, ModelError> {
        check_theta(self, theta)?;
        let mut y = Vec::with_capacity(self.output_dim());
        for _ in 0..self.copies {
            for &t in theta {
                let eps = if self.noise_sd > 0.0 {
                    self.noise_sd * rng.standard_normal()
                } else {
                    0.0
                };
                y.push(t + eps);
            }
        }
        Ok(y)
    }
}

/// Standard normal output that ignores θ.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSimulator {
    theta_dim: usize,
    n: usize,
}

impl NoiseSimulator {
    pub fn new(theta_dim: usize, n: usize) -> Result<Self, ModelError> {
        if theta_dim == 0 || n == 0 {
            return Err(ModelError::InvalidParameter("noise simulator needs dims >= 1".into()));
        }
        Ok(Self { theta_dim, n })
    }
}

impl Simulator for NoiseSimulator {
    fn name(&self) -> &str {
        "noise"
    }

    fn theta_dim(&self) -> usize {
        self.theta_dim
    }

    fn output_dim(&self) -> usize {
        self.n
    }

    fn simulate(&self, theta: &[f64], rng: &mut RngStream) -> Result<Vec<f64>, ModelError> {
        check_theta(self, theta)?;
        Ok((0..self.n).map(|_| rng.standard_normal()).collect())
    }
}

/// `flips` Bernoulli(θ) outcomes coded 0/1.
#[derive(Debug, Clone, PartialEq)]
pub struct CoinFlipSimulator {
    flips: usize,
}

impl CoinFlipSimulator {
    pub fn new(flips: usize) -> Result<Self, ModelError> {
        if flips == 0 {
            return Err(ModelError::InvalidParameter("need at least one flip".into()));
        }
        Ok(Self { flips })
    }
}

impl Simulator for CoinFlipSimulator {
    fn name(&self) -> &str {
        "coin-flip"
    }

    fn theta_dim(&self) -> usize {
        1
    }

    fn output_dim(&self) -> usize {
        self.flips
    }

    fn simulate(&self, theta: &[f64], rng: &mut RngStream) -> Result<Vec<f64>, ModelError> {
        check_theta(self, theta)?;
        let p = theta[0];
        if !(0.0..=1.0).contains(&p) {
            return Err(ModelError::InvalidParameter(format!("coin bias {p} outside [0, 1]")));
        }
        Ok((0..self.flips)
            .map(|_| if rng.uniform() < p { 1.0 } else { 0.0 })
            .collect())
    }
}

/// Wraps a closure as a simulator.
pub struct FnSimulator<F> {
    name: String,
    theta_dim: usize,
    output_dim: usize,
    f: F,
}

impl<F> FnSimulator<F>
where
    F: Fn(&[f64], &mut RngStream) -> Result<Vec<f64>, ModelError> + Send + Sync,
{
    pub fn new(name: impl Into<String>, theta_dim: usize, output_dim: usize, f: F) -> Self {
        Self {
            name: name.into(),
            theta_dim,
            output_dim,
            f,
        }
    }
}

impl<F> Simulator for FnSimulator<F>
where
    F: Fn(&[f64], &mut RngStream) -> Result<Vec<f64>, ModelError> + Send + Sync,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn theta_dim(&self) -> usize {
        self.theta_dim
    }

    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn simulate(&self, theta: &[f64], rng: &mut RngStream) -> Result<Vec<f64>, ModelError> {
        check_theta(self, theta)?;
        let y = (self.f)(theta, rng)?;
        if y.len() != self.output_dim {
            return Err(ModelError::DimensionMismatch {
                expected: self.output_dim,
                found: y.len(),
            });
        }
        Ok(y)
    }
}

pub(crate) fn binomial(n: u64, p: f64, rng: &mut RngStream) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("p in (0,1)").sample(rng)
}

/// Names accepted by [`build_simulator`].
pub const REGISTERED_SIMULATORS: &[&str] = &[
    "normal-normal",
    "epidemic",
    "epidemic-quantile",
    "replicate",
    "noise",
    "coin-flip",
];

/// Numeric simulator parameters keyed by name.
pub type SimulatorParams = BTreeMap<String, f64>;

fn param(params: &SimulatorParams, key: &str, default: f64) -> f64 {
    params.get(key).copied().unwrap_or(default)
}

fn count_param(params: &SimulatorParams, key: &str, default: usize) -> Result<usize, ModelError> {
    let v = param(params, key, default as f64);
    if v < 0.0 || v.fract() != 0.0 || !v.is_finite() {
        return Err(ModelError::InvalidParameter(format!("{key} must be a non-negative integer, got {v}")));
    }
    Ok(v as usize)
}

/// Instantiates a registered simulator.
///
/// | name | parameters (defaults) |
/// |------|-----------------------|
/// | `normal-normal` | `sigma2` (10), `n_obs` (100) |
/// | `epidemic` | `population` (100000), `weeks` (56) |
/// | `epidemic-quantile` | `population`, `weeks`, `replicates` (100) |
/// | `replicate` | `theta_dim` (1), `copies` (3), `noise_sd` (0) |
/// | `noise` | `theta_dim` (1), `n_obs` (10) |
/// | `coin-flip` | `flips` (2) |
pub fn build_simulator(name: &str, params: &SimulatorParams) -> Result<Box<dyn Simulator>, ModelError> {
    Ok(match name {
        "normal-normal" => Box::new(NormalNormalSimulator::new(
            param(params, "sigma2", 10.0),
            count_param(params, "n_obs", 100)?,
        )?),
        "epidemic" => Box::new(EpidemicSimulator::new(
            count_param(params, "population", EpidemicScenario::DEFAULT_POPULATION as usize)? as u64,
            count_param(params, "weeks", EpidemicScenario::DEFAULT_WEEKS)?,
        )?),
        "epidemic-quantile" => Box::new(QuantileTrajectorySimulator::new(
            EpidemicSimulator::new(
                count_param(params, "population", EpidemicScenario::DEFAULT_POPULATION as usize)? as u64,
                count_param(params, "weeks", EpidemicScenario::DEFAULT_WEEKS)?,
            )?,
            count_param(params, "replicates", 100)?,
        )?),
        "replicate" => Box::new(ReplicateSimulator::new(
            count_param(params, "theta_dim", 1)?,
            count_param(params, "copies", 3)?,
            param(params, "noise_sd", 0.0),
        )?),
        "noise" => Box::new(NoiseSimulator::new(
            count_param(params, "theta_dim", 1)?,
            count_param(params, "n_obs", 10)?,
        )?),
        "coin-flip" => Box::new(CoinFlipSimulator::new(count_param(params, "flips", 2)?)?),
        other => {
            return Err(ModelError::UnknownSimulator {
                name: other.to_string(),
                registered: REGISTERED_SIMULATORS.join(", "),
            })
        }
    })
}
