use super::{w1_distance, BaselineError};
use crate::exec::{self, Execution};
use crate::models::{PriorSpec, ReferenceTable, Simulator};
use crate::numerics::{DenseMatrix, RngStream};
use crate::summaries::SummaryMap;

/// Uniform-ball kernel on standardized summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct AbcConfig {
    /// Accept when the scaled distance is at most this value.
    pub epsilon: f64,
    /// Per-summary divisor applied before the Euclidean distance.
    pub scale: Vec<f64>,
}

impl AbcConfig {
    /// Unit scales.
    pub fn unscaled(epsilon: f64, k: usize) -> Self {
        Self {
            epsilon,
            scale: vec![1.0; k],
        }
    }

    fn validate(&self, k: usize) -> Result<(), BaselineError> {
        if !(self.epsilon >= 0.0) {
            return Err(BaselineError::InvalidArgument(format!(
                "tolerance must be >= 0, got {}",
                self.epsilon
            )));
        }
        if self.scale.len() != k || self.scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(BaselineError::InvalidArgument(format!(
                "need {k} positive finite summary scales"
            )));
        }
        Ok(())
    }
}

/// Prior-predictive standard deviation of each summary over a reference
/// table; zero-spread summaries get scale 1.
pub fn summary_scales(table: &ReferenceTable, summary: &SummaryMap) -> Result<Vec<f64>, BaselineError> {
    let s = summary.apply_rows(&table.y)?;
    Ok((0..s.cols())
        .map(|c| {
            let col = s.column(c);
            let sd = if col.len() > 1 { crate::stats::std_dev(&col) } else { 0.0 };
            if sd > 0.0 && sd.is_finite() {
                sd
            } else {
                1.0
            }
        })
        .collect())
}

/// Every proposal of a rejection run with its distance to the observation.
#[derive(Debug, Clone, PartialEq)]
pub struct AbcProposals {
    pub theta: DenseMatrix,
    pub distance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbcResult {
    pub accepted: DenseMatrix,
    /// Proposal index of each accepted row; proposal `i` used `rng.substream(i)`.
    pub indices: Vec<usize>,
    pub distances: Vec<f64>,
    pub budget: usize,
    pub acceptance_rate: f64,
}

impl AbcResult {
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Human-readable note when nothing was accepted.
    pub fn diagnostic(&self) -> Option<String> {
        self.is_empty().then(|| {
            format!(
                "no proposals accepted out of {}; increase the tolerance or the budget",
                self.budget
            )
        })
    }
}

impl AbcProposals {
    pub fn budget(&self) -> usize {
        self.distance.len()
    }

    /// Proposals with distance ≤ ε, in proposal order.
    pub fn accept(&self, epsilon: f64) -> AbcResult {
        let indices: Vec<usize> = (0..self.budget()).filter(|&i| self.distance[i] <= epsilon).collect();
        let d = self.theta.cols();
        let mut rows = Vec::with_capacity(indices.len() * d);
        for &i in &indices {
            rows.extend_from_slice(self.theta.row(i));
        }
        AbcResult {
            accepted: DenseMatrix::from_vec(indices.len(), d, rows).expect("consistent shape"),
            distances: indices.iter().map(|&i| self.distance[i]).collect(),
            acceptance_rate: indices.len() as f64 / self.budget().max(1) as f64,
            budget: self.budget(),
            indices,
        }
    }
}

/// Scaled Euclidean distance between summaries.
pub fn summary_distance(a: &[f64], b: &[f64], scale: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(scale)
        .map(|((x, y), s)| ((x - y) / s).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Simulates `budget` prior-predictive proposals and records their distances.
pub fn abc_proposals(
    simulator: &dyn Simulator,
    prior: &PriorSpec,
    summary: &SummaryMap,
    y_obs: &[f64],
    scale: &[f64],
    budget: usize,
    rng: &RngStream,
    execution: Execution,
) -> Result<AbcProposals, BaselineError> {
    if budget == 0 {
        return Err(BaselineError::InvalidArgument("budget must be >= 1".into()));
    }
    let s_obs = summary.apply(y_obs)?;
    if scale.len() != s_obs.len() {
        return Err(BaselineError::InvalidArgument(format!(
            "need {} summary scales, got {}",
            s_obs.len(),
            scale.len()
        )));
    }
    let rows = exec::try_map_indexed(execution, budget, |i| -> Result<_, BaselineError> {
        let mut r = rng.substream(i as u64);
        let theta = prior.sample(&mut r);
        let y = simulator.simulate(&theta, &mut r)?;
        let dist = summary_distance(&summary.apply(&y)?, &s_obs, scale);
        Ok((theta, dist))
    })?;
    let d = prior.dim();
    let mut theta = Vec::with_capacity(budget * d);
    let mut distance = Vec::with_capacity(budget);
    for (t, dist) in rows {
        theta.extend(t);
        distance.push(dist);
    }
    Ok(AbcProposals {
        theta: DenseMatrix::from_vec(budget, d, theta)?,
        distance,
    })
}

/// Rejection ABC with the uniform kernel `‖S(y) − S(y_obs)‖ ≤ ε`.
pub fn abc_rejection(
    simulator: &dyn Simulator,
    prior: &PriorSpec,
    summary: &SummaryMap,
    y_obs: &[f64],
    cfg: &AbcConfig,
    budget: usize,
    rng: &RngStream,
    execution: Execution,
) -> Result<AbcResult, BaselineError> {
    cfg.validate(summary.output_dim())?;
    let p = abc_proposals(simulator, prior, summary, y_obs, &cfg.scale, budget, rng, execution)?;
    Ok(p.accept(cfg.epsilon))
}

/// One line of a tolerance sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub epsilon: f64,
    pub accepted: usize,
    pub acceptance_rate: f64,
    /// Distance of the first coordinate to the reference law, when one is given
    /// and something was accepted.
    pub w1: Option<f64>,
}

/// Applies each tolerance to one shared set of proposals, so accepted sets are
/// nested.
pub fn epsilon_sweep(
    proposals: &AbcProposals,
    epsilons: &[f64],
    reference_quantile: Option<&dyn Fn(f64) -> f64>,
    grid: usize,
) -> Result<Vec<SweepRow>, BaselineError> {
    epsilons
        .iter()
        .map(|&eps| {
            let res = proposals.accept(eps);
            let w1 = match reference_quantile {
                Some(q) if !res.is_empty() => Some(w1_distance(&res.accepted.column(0), q, grid)?),
                _ => None,
            };
            Ok(SweepRow {
                epsilon: eps,
                accepted: res.indices.len(),
                acceptance_rate: res.acceptance_rate,
                w1,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{CoinFlipSimulator, NormalNormalSimulator, PriorDist};

    #[test]
    fn infinite_tolerance_returns_prior() {
        let prior = PriorSpec::uniform_box(&[(0.0, 1.0)]).unwrap();
        let sim = CoinFlipSimulator::new(2).unwrap();
        let res = abc_rejection(
            &sim,
            &prior,
            &SummaryMap::identity(2),
            &[1.0, 1.0],
            &AbcConfig::unscaled(f64::INFINITY, 2),
            20_000,
            &RngStream::new(1, 0),
            Execution::Parallel,
        )
        .unwrap();
        assert_eq!(res.acceptance_rate, 1.0);
        let m = crate::stats::mean(&res.accepted.column(0));
        assert!((m - 0.5).abs() < 0.01);
    }

    #[test]
    fn two_heads_gives_beta_three_one() {
        let prior = PriorSpec::uniform_box(&[(0.0, 1.0)]).unwrap();
        let sim = CoinFlipSimulator::new(2).unwrap();
        let res = abc_rejection(
            &sim,
            &prior,
            &SummaryMap::identity(2),
            &[1.0, 1.0],
            &AbcConfig::unscaled(0.0, 2),
            100_000,
            &RngStream::new(2, 0),
            Execution::Parallel,
        )
        .unwrap();
        // P(two heads) = ∫ θ² dθ = 1/3
        assert!((res.acceptance_rate - 1.0 / 3.0).abs() < 0.01);
        let m = crate::stats::mean(&res.accepted.column(0));
        assert!((m - 0.75).abs() < 0.01, "{m}");
    }

    #[test]
    fn acceptance_shrinks_with_tolerance_and_reverifies() {
        let prior = PriorSpec::new(vec![PriorDist::Normal { mean: 0.0, variance: 5.0 }]).unwrap();
        let sim = NormalNormalSimulator::new(10.0, 20).unwrap();
        let ybar = SummaryMap::linear(DenseMatrix::from_vec(1, 20, vec![0.05; 20]).unwrap(), vec![0.0]).unwrap();
        let y_obs = vec![1.0; 20];
        let rng = RngStream::new(3, 0);
        let p = abc_proposals(&sim, &prior, &ybar, &y_obs, &[1.0], 5_000, &rng, Execution::Parallel).unwrap();
        let mut last = usize::MAX;
        for eps in [4.0, 2.0, 1.0, 0.5, 0.25, 0.1] {
            let r = p.accept(eps);
            assert!(r.indices.len() <= last);
            last = r.indices.len();
            for (&i, row) in r.indices.iter().zip(r.accepted.iter_rows()) {
                let mut s = rng.substream(i as u64);
                let theta = prior.sample(&mut s);
                assert_eq!(theta.as_slice(), row);
                let y = sim.simulate(&theta, &mut s).unwrap();
                assert!((ybar.apply(&y).unwrap()[0] - 1.0).abs() <= eps);
            }
        }
    }

    #[test]
    fn empty_acceptance_is_not_an_error() {
        let prior = PriorSpec::uniform_box(&[(0.0, 1.0)]).unwrap();
        let sim = CoinFlipSimulator::new(2).unwrap();
        let res = abc_rejection(
            &sim,
            &prior,
            &SummaryMap::identity(2),
            &[5.0, 5.0],
            &AbcConfig::unscaled(0.0, 2),
            100,
            &RngStream::new(2, 0),
            Execution::Sequential,
        )
        .unwrap();
        assert!(res.is_empty());
        assert!(res.diagnostic().is_some());
    }
}
