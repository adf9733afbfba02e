//! Implicit quantile networks and posterior sampling through the inverse CDF.

mod autoregressive;
mod embedding;
mod iqn;

pub use autoregressive::{sample_posterior, train_autoregressive, AutoregressiveQuantileModel};
pub use embedding::{cosine_embed, CosineEmbedding};
pub use iqn::{conditioning_features, train_iqn, train_iqn_on, ImplicitQuantileNet, IqnSpec};

use thiserror::Error;

use crate::analytic::{normal_quantile, AnalyticError};
use crate::numerics::NumericsError;
use crate::summaries::SummaryError;

#[derive(Debug, Error)]
pub enum QuantileError {
    #[error("quantile level {0} outside [0, 1]")]
    LevelOutOfRange(f64),
    #[error("quantile grid must be strictly increasing inside (0, 1)")]
    InvalidGrid,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("reference table is empty")]
    EmptyTable,
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("quadrature needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error(transparent)]
    Summary(#[from] SummaryError),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// `ρ_τ(u) = u·(τ − 1[u < 0])`.
pub fn pinball_loss(tau: f64, u: f64) -> f64 {
    if u < 0.0 {
        u * (tau - 1.0)
    } else {
        u * tau
    }
}

/// A conditional quantile function `τ ↦ F⁻¹(τ | x)`.
pub trait ConditionalQuantile: Send + Sync {
    fn cond_dim(&self) -> usize;
    fn quantile(&self, x: &[f64], tau: f64) -> Result<f64, QuantileError>;
}

/// `x ↦ N(mean + Σ coef·x, sd²)`; with no coefficients a fixed normal.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalQuantileStub {
    pub mean: f64,
    pub sd: f64,
    pub coef: Vec<f64>,
}

impl NormalQuantileStub {
    pub fn new(mean: f64, sd: f64) -> Self {
        Self {
            mean,
            sd,
            coef: Vec::new(),
        }
    }
}

impl ConditionalQuantile for NormalQuantileStub {
    fn cond_dim(&self) -> usize {
        self.coef.len()
    }

    fn quantile(&self, x: &[f64], tau: f64) -> Result<f64, QuantileError> {
        check_len(self.cond_dim(), x)?;
        let loc = self.mean + x.iter().zip(&self.coef).map(|(a, b)| a * b).sum::<f64>();
        Ok(loc + self.sd * normal_quantile(tau)?)
    }
}

/// `F⁻¹(τ) = lo + (hi − lo)·τ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformQuantileStub {
    pub lo: f64,
    pub hi: f64,
}

impl ConditionalQuantile for UniformQuantileStub {
    fn cond_dim(&self) -> usize {
        0
    }

    fn quantile(&self, x: &[f64], tau: f64) -> Result<f64, QuantileError> {
        check_len(0, x)?;
        check_level(tau)?;
        Ok(self.lo + (self.hi - self.lo) * tau)
    }
}

fn check_len(expected: usize, x: &[f64]) -> Result<(), QuantileError> {
    if x.len() != expected {
        return Err(QuantileError::DimensionMismatch {
            expected,
            found: x.len(),
        });
    }
    Ok(())
}

fn check_level(tau: f64) -> Result<(), QuantileError> {
    if (0.0..=1.0).contains(&tau) {
        Ok(())
    } else {
        Err(QuantileError::LevelOutOfRange(tau))
    }
}

/// Rearranged quantiles on a grid, plus how often the raw outputs crossed.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileCurve {
    pub taus: Vec<f64>,
    pub values: Vec<f64>,
    /// Fraction of adjacent grid pairs whose raw values decreased.
    pub crossing_rate: f64,
}

/// Evaluates `F⁻¹(τ | x)` on a strictly increasing grid inside (0, 1) and
/// sorts the outputs (monotone rearrangement).
pub fn posterior_quantile_curve(
    q: &dyn ConditionalQuantile,
    x: &[f64],
    taus: &[f64],
) -> Result<QuantileCurve, QuantileError> {
    if taus.is_empty()
        || taus.iter().any(|&t| !(t > 0.0 && t < 1.0))
        || taus.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(QuantileError::InvalidGrid);
    }
    let mut values = taus
        .iter()
        .map(|&t| q.quantile(x, t))
        .collect::<Result<Vec<_>, _>>()?;
    let crossings = values.windows(2).filter(|w| w[1] < w[0]).count();
    let crossing_rate = if values.len() > 1 {
        crossings as f64 / (values.len() - 1) as f64
    } else {
        0.0
    };
    values.sort_by(f64::total_cmp);
    Ok(QuantileCurve {
        taus: taus.to_vec(),
        values,
        crossing_rate,
    })
}

/// `{0.05, 0.10, …, 0.95}`.
pub fn default_tau_grid() -> Vec<f64> {
    (1..=19).map(|i| i as f64 * 0.05).collect()
}

/// Midpoint nodes `(j + ½)/M`.
pub fn midpoint_grid(m: usize) -> Vec<f64> {
    (0..m).map(|j| (j as f64 + 0.5) / m as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectedUtility {
    pub value: f64,
    /// False when `g` decreased somewhere along the quantile curve, in which
    /// case `g(F⁻¹(τ))` is not the quantile function of `g(θ)` and `value` is
    /// still the quadrature of `∫ g(F⁻¹(τ)) dτ` but not a quantile integral.
    pub monotone: bool,
}

/// `E g(θ) ≈ (1/M) Σⱼ g(F⁻¹((j + ½)/M))` over the rearranged curve.
pub fn expected_utility(
    q: &dyn ConditionalQuantile,
    x: &[f64],
    g: impl Fn(f64) -> f64,
    m: usize,
) -> Result<ExpectedUtility, QuantileError> {
    if m < 2 {
        return Err(QuantileError::TooFewNodes(m));
    }
    let curve = posterior_quantile_curve(q, x, &midpoint_grid(m))?;
    let gv: Vec<f64> = curve.values.iter().map(|&v| g(v)).collect();
    let monotone = gv.windows(2).all(|w| w[1] >= w[0]);
    Ok(ExpectedUtility {
        value: gv.iter().sum::<f64>() / m as f64,
        monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;
    use proptest::prelude::*;

    #[test]
    fn pinball_values() {
        assert_eq!(pinball_loss(0.5, 2.0), 1.0);
        assert_eq!(pinball_loss(0.5, -2.0), 1.0);
        assert!((pinball_loss(0.9, 1.0) - 0.9).abs() < 1e-15);
        assert!((pinball_loss(0.9, -1.0) - 0.1).abs() < 1e-15);
        assert_eq!(pinball_loss(0.3, 0.0), 0.0);
    }

    proptest! {
        #[test]
        fn pinball_is_convex_with_stated_slopes(tau in 0.01f64..0.99, a in -10.0f64..10.0, b in -10.0f64..10.0, w in 0.0f64..1.0) {
            let mid = w * a + (1.0 - w) * b;
            prop_assert!(pinball_loss(tau, mid) <= w * pinball_loss(tau, a) + (1.0 - w) * pinball_loss(tau, b) + 1e-12);
            prop_assert!(pinball_loss(tau, a) >= 0.0);
            let h = 1e-3;
            if a > h {
                prop_assert!(((pinball_loss(tau, a + h) - pinball_loss(tau, a)) / h - tau).abs() < 1e-9);
            }
            if a < -h {
                prop_assert!(((pinball_loss(tau, a + h) - pinball_loss(tau, a)) / h - (tau - 1.0)).abs() < 1e-9);
            }
        }

        #[test]
        fn rearranged_curve_is_sorted(seed in 0u64..1000, len in 1usize..40) {
            struct Noisy(Vec<f64>);
            impl ConditionalQuantile for Noisy {
                fn cond_dim(&self) -> usize { 0 }
                fn quantile(&self, _: &[f64], tau: f64) -> Result<f64, QuantileError> {
                    let i = ((tau * self.0.len() as f64) as usize).min(self.0.len() - 1);
                    Ok(self.0[i])
                }
            }
            let mut rng = RngStream::new(seed, 0);
            let q = Noisy((0..len).map(|_| rng.standard_normal()).collect());
            let grid: Vec<f64> = (0..len).map(|i| (i as f64 + 0.5) / len as f64).collect();
            let c = posterior_quantile_curve(&q, &[], &grid).unwrap();
            prop_assert!(c.values.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!((0.0..=1.0).contains(&c.crossing_rate));
        }
    }

    #[test]
    fn curve_of_normal_stub_is_exact() {
        let stub = NormalQuantileStub::new(1.3, 0.4);
        let grid = default_tau_grid();
        let c = posterior_quantile_curve(&stub, &[], &grid).unwrap();
        for (t, v) in grid.iter().zip(&c.values) {
            let want = 1.3 + 0.4 * normal_quantile(*t).unwrap();
            assert!((v - want).abs() < 1e-9);
        }
        assert_eq!(c.crossing_rate, 0.0);
        let med = posterior_quantile_curve(&stub, &[], &[0.5]).unwrap();
        assert!((med.values[0] - 1.3).abs() < 1e-12);
    }

    #[test]
    fn grid_must_be_strictly_increasing_inside_unit_interval() {
        let stub = NormalQuantileStub::new(0.0, 1.0);
        for g in [vec![], vec![0.0, 0.5], vec![0.5, 0.5], vec![0.6, 0.4], vec![0.5, 1.0]] {
            assert!(matches!(posterior_quantile_curve(&stub, &[], &g), Err(QuantileError::InvalidGrid)));
        }
    }

    #[test]
    fn expected_utility_identities() {
        let stub = NormalQuantileStub::new(0.7, 2.0);
        let eu = expected_utility(&stub, &[], |t| t, 10_000).unwrap();
        assert!((eu.value - 0.7).abs() < 1e-3);
        assert!(eu.monotone);

        let uni = UniformQuantileStub { lo: 0.0, hi: 1.0 };
        let eu = expected_utility(&uni, &[], |t| t, 2).unwrap();
        assert!((eu.value - 0.5).abs() < 1e-15);

        assert!(matches!(expected_utility(&uni, &[], |t| t, 1), Err(QuantileError::TooFewNodes(1))));
    }

    #[test]
    fn second_moment_flagged_but_computed() {
        // Monte Carlo oracle for E θ² under N(0, 1).
        let mut rng = RngStream::new(2024, 0);
        let n = 10_000_000;
        let mc = (0..n).map(|_| rng.standard_normal().powi(2)).sum::<f64>() / n as f64;
        let eu = expected_utility(&NormalQuantileStub::new(0.0, 1.0), &[], |t| t * t, 10_000).unwrap();
        assert!(!eu.monotone);
        assert!((eu.value - mc).abs() < 0.01 * mc, "{} vs {mc}", eu.value);
    }
}
