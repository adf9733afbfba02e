use gbc_core::exec::Execution;
use gbc_core::models::{
    generate_reference_table, EpidemicScenario, EpidemicSimulator, EpidemicStudyConfig, PriorSpec, run_epidemic_study,
};
use gbc_core::numerics::RngStream;
use gbc_core::quantile::{sample_posterior, train_iqn, AutoregressiveQuantileModel, IqnSpec};
use gbc_core::summaries::{fit_linear_summary_with, YTransform, LINEAR_RIDGE};
use gbc_core::train::TrainOptions;

#[test]
fn initial_infected_draws_stay_in_prior_box() {
    let prior = PriorSpec::uniform_box(&EpidemicScenario::RANGES).unwrap();
    let sim = EpidemicSimulator::new(EpidemicScenario::DEFAULT_POPULATION, EpidemicScenario::DEFAULT_WEEKS).unwrap();
    let table = generate_reference_table(&prior, &sim, 4_000, &RngStream::new(21, 0), Execution::Parallel).unwrap();
    let summary = fit_linear_summary_with(&table, YTransform::Log1p, LINEAR_RIDGE).unwrap();
    let opts = TrainOptions {
        epochs: 15,
        seed: 21,
        ..TrainOptions::default()
    };
    let spec = IqnSpec::default();
    let nets = (0..2)
        .map(|k| train_iqn(&table, &summary, k, &spec, &opts).unwrap().0)
        .collect();
    let model = AutoregressiveQuantileModel::new(summary, nets).unwrap();

    let truth = EpidemicScenario {
        transmission: 5.5e-5,
        initial_infected: 10.0,
        intervention_delay: 6.0,
        intervention_efficacy: 0.45,
        travel_reduction: 5.5e-5,
    };
    let y_obs = gbc_core::models::Simulator::simulate(&sim, &truth.to_vec(), &mut RngStream::new(22, 0)).unwrap();
    let draws = sample_posterior(&model, &y_obs, 10_000, &RngStream::new(23, 0), Execution::Parallel).unwrap();
    let (lo, hi) = EpidemicScenario::RANGES[1];
    let outside = draws.column(1).iter().filter(|v| **v < lo || **v > hi).count();
    assert!((outside as f64) / 10_000.0 < 0.01, "{outside} draws of 10000 outside [{lo}, {hi}]");
}

#[test]
fn study_quantile_curves_are_ordered_and_monotone_in_time() {
    let cfg = EpidemicStudyConfig {
        scenarios: 8,
        replicates: 20,
        ..EpidemicStudyConfig::default()
    };
    let study = run_epidemic_study(&cfg, &RngStream::new(1, 0), Execution::Parallel).unwrap();
    assert_eq!(study.quantiles.len(), 8);
    for per_scenario in &study.quantiles {
        for pair in per_scenario.windows(2) {
            for (lo, hi) in pair[0].iter().zip(&pair[1]) {
                assert!(lo <= hi);
            }
        }
        for curve in per_scenario {
            assert!(curve.windows(2).all(|w| w[0] <= w[1]), "cumulative counts must not decrease");
        }
    }
    let seq = run_epidemic_study(&cfg, &RngStream::new(1, 0), Execution::Sequential).unwrap();
    assert_eq!(study.quantiles, seq.quantiles);
}
