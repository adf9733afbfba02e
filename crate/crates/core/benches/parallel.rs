use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use gbc_core::baselines::{abc_rejection, AbcConfig};
use gbc_core::exec::Execution;
use gbc_core::models::{
    generate_reference_table, simulate_replicates, EpidemicScenario, NormalNormalSimulator, PriorDist, PriorSpec,
};
use gbc_core::numerics::{DenseMatrix, RngStream};
use gbc_core::quantile::{sample_posterior, AutoregressiveQuantileModel, ImplicitQuantileNet, IqnSpec};
use gbc_core::summaries::SummaryMap;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn normal_setup() -> (PriorSpec, NormalNormalSimulator, SummaryMap) {
    let prior = PriorSpec::new(vec![PriorDist::Normal { mean: 0.0, variance: 5.0 }]).unwrap();
    let sim = NormalNormalSimulator::new(10.0, 100).unwrap();
    let ybar = SummaryMap::linear(DenseMatrix::from_vec(1, 100, vec![0.01; 100]).unwrap(), vec![0.0]).unwrap();
    (prior, sim, ybar)
}

fn table_generation(c: &mut Criterion) {
    let (prior, sim, _) = normal_setup();
    let rng = RngStream::new(1, 0);
    let mut g = c.benchmark_group("reference_table_10k");
    for (name, mode) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| black_box(generate_reference_table(&prior, &sim, 10_000, &rng, mode).unwrap()))
        });
    }
    g.finish();
}

fn abc(c: &mut Criterion) {
    let (prior, sim, ybar) = normal_setup();
    let y_obs = vec![0.5; 100];
    let cfg = AbcConfig::unscaled(0.1, 1);
    let rng = RngStream::new(2, 0);
    let mut g = c.benchmark_group("abc_rejection_20k");
    for (name, mode) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| black_box(abc_rejection(&sim, &prior, &ybar, &y_obs, &cfg, 20_000, &rng, mode).unwrap()))
        });
    }
    g.finish();
}

fn epidemic_replicates(c: &mut Criterion) {
    let sc = EpidemicScenario {
        transmission: 5.5e-5,
        initial_infected: 10.0,
        intervention_delay: 6.0,
        intervention_efficacy: 0.45,
        travel_reduction: 5.5e-5,
    };
    let rng = RngStream::new(3, 0);
    let mut g = c.benchmark_group("epidemic_replicates_100");
    for (name, mode) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| {
                black_box(
                    simulate_replicates(
                        &sc,
                        0,
                        EpidemicScenario::DEFAULT_POPULATION,
                        EpidemicScenario::DEFAULT_WEEKS,
                        100,
                        &rng,
                        mode,
                    )
                    .unwrap(),
                )
            })
        });
    }
    g.finish();
}

fn posterior_sampling(c: &mut Criterion) {
    let mut init = RngStream::new(4, 0);
    let net = ImplicitQuantileNet::new(1, &IqnSpec::default(), &mut init).unwrap();
    let model = AutoregressiveQuantileModel::new(SummaryMap::identity(1), vec![net]).unwrap();
    let rng = RngStream::new(5, 0);
    let mut g = c.benchmark_group("sample_posterior_10k");
    for (name, mode) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| black_box(sample_posterior(&model, &[0.3], 10_000, &rng, mode).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, table_generation, abc, epidemic_replicates, posterior_sampling);
criterion_main!(benches);
