use super::{train_iqn, ConditionalQuantile, ImplicitQuantileNet, IqnSpec, QuantileError};
use crate::exec::{self, Execution};
use crate::models::ReferenceTable;
use crate::numerics::{DenseMatrix, RngStream};
use crate::summaries::SummaryMap;
use crate::train::{TrainOptions, TrainReport};

/// `θ₁ = F⁻¹₁(τ₁ | s)`, `θ₂ = F⁻¹₂(τ₂ | s, θ₁)`, … in coordinate order.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoregressiveQuantileModel<Q = ImplicitQuantileNet> {
    summary: SummaryMap,
    components: Vec<Q>,
}

impl<Q: ConditionalQuantile> AutoregressiveQuantileModel<Q> {
    pub fn new(summary: SummaryMap, components: Vec<Q>) -> Result<Self, QuantileError> {
        if components.is_empty() {
            return Err(QuantileError::InvalidModel("no components".into()));
        }
        let k = summary.output_dim();
        for (i, c) in components.iter().enumerate() {
            if c.cond_dim() != k + i {
                return Err(QuantileError::InvalidModel(format!(
                    "component {i} conditions on {} inputs, expected {}",
                    c.cond_dim(),
                    k + i
                )));
            }
        }
        Ok(Self { summary, components })
    }

    pub fn summary(&self) -> &SummaryMap {
        &self.summary
    }

    pub fn components(&self) -> &[Q] {
        &self.components
    }

    pub fn theta_dim(&self) -> usize {
        self.components.len()
    }

    /// Sampling order of the coordinates (always natural order).
    pub fn order(&self) -> Vec<usize> {
        (0..self.theta_dim()).collect()
    }

    /// Pushes one vector of levels through the chain, given summary `s`.
    pub fn transport(&self, s: &[f64], taus: &[f64]) -> Result<Vec<f64>, QuantileError> {
        if taus.len() != self.theta_dim() {
            return Err(QuantileError::DimensionMismatch {
                expected: self.theta_dim(),
                found: taus.len(),
            });
        }
        let mut x = s.to_vec();
        let mut theta = Vec::with_capacity(taus.len());
        for (c, &tau) in self.components.iter().zip(taus) {
            let v = c.quantile(&x, tau)?;
            theta.push(v);
            x.push(v);
        }
        Ok(theta)
    }
}

/// Trains one quantile network per θ coordinate.
pub fn train_autoregressive(
    table: &ReferenceTable,
    summary: SummaryMap,
    spec: &IqnSpec,
    opts: &TrainOptions,
) -> Result<(AutoregressiveQuantileModel, Vec<TrainReport>), QuantileError> {
    let mut nets = Vec::with_capacity(table.theta_dim());
    let mut reports = Vec::with_capacity(table.theta_dim());
    for k in 0..table.theta_dim() {
        let (net, report) = train_iqn(table, &summary, k, spec, opts)?;
        nets.push(net);
        reports.push(report);
    }
    Ok((AutoregressiveQuantileModel::new(summary, nets)?, reports))
}

/// `K` posterior draws (rows) for observation `y_obs`. Draw `i` takes its
/// levels from `rng.substream(i)`, so output is independent of execution mode.
pub fn sample_posterior<Q: ConditionalQuantile>(
    model: &AutoregressiveQuantileModel<Q>,
    y_obs: &[f64],
    k: usize,
    rng: &RngStream,
    execution: Execution,
) -> Result<DenseMatrix, QuantileError> {
    let s = model.summary.apply(y_obs)?;
    let d = model.theta_dim();
    let rows = exec::try_map_indexed(execution, k, |i| {
        let mut r = rng.substream(i as u64);
        let taus: Vec<f64> = (0..d).map(|_| r.uniform_open()).collect();
        model.transport(&s, &taus)
    })?;
    Ok(DenseMatrix::from_vec(k, d, rows.concat())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantile::NormalQuantileStub;
    use crate::stats::{ks_pvalue, ks_statistic};

    #[test]
    fn stub_draws_match_normal_law() {
        let model =
            AutoregressiveQuantileModel::new(SummaryMap::identity(1), vec![NormalQuantileStub {
                mean: 0.0,
                sd: 0.5,
                coef: vec![1.0],
            }])
            .unwrap();
        let draws = sample_posterior(&model, &[2.0], 100_000, &RngStream::new(3, 0), Execution::Parallel).unwrap();
        let n = crate::analytic::Normal { mean: 2.0, sd: 0.5 };
        let d = ks_statistic(&draws.column(0), |x| n.cdf(x));
        assert!(d < 0.01, "KS distance {d}");
        assert!(ks_pvalue(d, 100_000) > 0.001);
    }

    #[test]
    fn single_draw_reproducible_and_mode_independent() {
        let model = AutoregressiveQuantileModel::new(
            SummaryMap::identity(1),
            vec![
                NormalQuantileStub {
                    mean: 0.0,
                    sd: 1.0,
                    coef: vec![1.0],
                },
                NormalQuantileStub {
                    mean: 0.0,
                    sd: 1.0,
                    coef: vec![0.0, 2.0],
                },
            ],
        )
        .unwrap();
        let rng = RngStream::new(10, 0);
        let a = sample_posterior(&model, &[1.0], 1, &rng, Execution::Sequential).unwrap();
        let b = sample_posterior(&model, &[1.0], 1, &rng, Execution::Sequential).unwrap();
        assert_eq!(a, b);
        let p = sample_posterior(&model, &[1.0], 64, &rng, Execution::Parallel).unwrap();
        let s = sample_posterior(&model, &[1.0], 64, &rng, Execution::Sequential).unwrap();
        assert_eq!(p, s);
        assert_eq!(p.cols(), 2);
        assert_eq!(sample_posterior(&model, &[1.0], 0, &rng, Execution::Parallel).unwrap().rows(), 0);
    }

    #[test]
    fn mismatched_chain_rejected() {
        let bad = AutoregressiveQuantileModel::new(SummaryMap::identity(1), vec![NormalQuantileStub::new(0.0, 1.0)]);
        assert!(matches!(bad, Err(QuantileError::InvalidModel(_))));
        let model = AutoregressiveQuantileModel::new(SummaryMap::identity(2), vec![NormalQuantileStub {
            mean: 0.0,
            sd: 1.0,
            coef: vec![1.0, 1.0],
        }])
        .unwrap();
        assert!(sample_posterior(&model, &[1.0], 3, &RngStream::new(0, 0), Execution::Sequential).is_err());
    }
}
