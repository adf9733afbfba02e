use gbc_core::analytic::{conjugate_posterior, NormalNormalModel};
use gbc_core::baselines::{
    abc_proposals, epsilon_sweep, fiducial_rejection, w1_distance, FiducialConfig, LocationModel,
};
use gbc_core::exec::Execution;
use gbc_core::models::{NormalNormalSimulator, PriorDist, PriorSpec, Simulator};
use gbc_core::numerics::{DenseMatrix, RngStream};
use gbc_core::stats::{ks_pvalue, ks_statistic, mean};
use gbc_core::summaries::SummaryMap;

#[test]
fn abc_with_sample_mean_approaches_conjugate_posterior() {
    let prior = PriorSpec::new(vec![PriorDist::Normal { mean: 0.0, variance: 5.0 }]).unwrap();
    let sim = NormalNormalSimulator::new(10.0, 100).unwrap();
    let y_obs = sim.simulate(&[1.3], &mut RngStream::new(7, 0)).unwrap();
    let post = conjugate_posterior(&NormalNormalModel::new(0.0, 5.0, 10.0, &y_obs).unwrap());
    let ybar = SummaryMap::linear(DenseMatrix::from_vec(1, 100, vec![0.01; 100]).unwrap(), vec![0.0]).unwrap();
    let p = abc_proposals(&sim, &prior, &ybar, &y_obs, &[1.0], 100_000, &RngStream::new(8, 0), Execution::Parallel)
        .unwrap();
    let q = |u: f64| post.quantile(u).unwrap();
    let rows = epsilon_sweep(&p, &[2.0, 0.5, 0.1], Some(&q), 1000).unwrap();
    let w: Vec<f64> = rows.iter().map(|r| r.w1.unwrap()).collect();
    assert!(w[2] < w[0], "{w:?}");
    assert!(w[2] < 0.2 * post.sd(), "{w:?}");
    assert!(rows.windows(2).all(|r| r[1].accepted <= r[0].accepted));
}

#[test]
fn fiducial_location_draws_follow_normal_around_observation() {
    let y = -0.4;
    let cfg = FiducialConfig::new(1e-6, vec![(y - 12.0, y + 12.0)]);
    let res = fiducial_rejection(&LocationModel, &[y], &cfg, 10_000, &RngStream::new(3, 0), Execution::Parallel).unwrap();
    assert_eq!(res.draws.rows(), 10_000);
    let n = gbc_core::analytic::Normal { mean: y, sd: 1.0 };
    let d = ks_statistic(&res.draws.column(0), |x| n.cdf(x));
    assert!(ks_pvalue(d, 10_000) > 0.01, "KS {d}");
    let w = w1_distance(&res.draws.column(0), |u| n.quantile(u).unwrap(), 1000).unwrap();
    assert!(w < 0.05);
    assert!((mean(&res.draws.column(0)) - y).abs() < 0.05);
}
