//! Rejection ABC and fiducial baselines, plus a Wasserstein-1 yardstick.

mod abc;
mod fiducial;

pub use abc::{
    abc_proposals, abc_rejection, epsilon_sweep, summary_distance, summary_scales, AbcConfig, AbcProposals,
    AbcResult, SweepRow,
};
pub use fiducial::{
    coordinate_descent, fiducial_rejection, golden_section, DataGenerator, FiducialConfig, FiducialResult,
    LocationModel, NormalSummaryModel, ScaledLocationModel,
};

use crate::models::ModelError;
use crate::numerics::{NumericsError, RngStream};
use crate::stats::{quantile_sorted, sorted_copy};
use crate::summaries::SummaryError;

#[derive(Debug, thiserror::Error)]
pub enum BaselineError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no samples to compare")]
    NoSamples,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Summary(#[from] SummaryError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// `∫₀¹ |F̂⁻¹(u) − F⁻¹(u)| du` by the midpoint rule on `grid` nodes, with the
/// empirical quantile interpolated linearly.
pub fn w1_distance(samples: &[f64], reference_quantile: impl Fn(f64) -> f64, grid: usize) -> Result<f64, BaselineError> {
    if samples.is_empty() {
        return Err(BaselineError::NoSamples);
    }
    if grid == 0 {
        return Err(BaselineError::InvalidArgument("grid must be >= 1".into()));
    }
    let sorted = sorted_copy(samples);
    let m = grid as f64;
    Ok((0..grid)
        .map(|j| {
            let u = (j as f64 + 0.5) / m;
            (quantile_sorted(&sorted, u) - reference_quantile(u)).abs()
        })
        .sum::<f64>()
        / m)
}

/// Bootstrap standard error of [`w1_distance`].
pub fn w1_bootstrap_se(
    samples: &[f64],
    reference_quantile: impl Fn(f64) -> f64,
    grid: usize,
    replicates: usize,
    rng: &RngStream,
) -> Result<f64, BaselineError> {
    if replicates < 2 {
        return Err(BaselineError::InvalidArgument("need at least 2 bootstrap replicates".into()));
    }
    let n = samples.len();
    let mut values = Vec::with_capacity(replicates);
    let mut buf = vec![0.0; n];
    for b in 0..replicates {
        let mut r = rng.substream(b as u64);
        for v in buf.iter_mut() {
            *v = samples[r.below(n)];
        }
        values.push(w1_distance(&buf, &reference_quantile, grid)?);
    }
    Ok(crate::stats::std_dev(&values))
}
