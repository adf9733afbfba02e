//! The `gbc` subcommands. Each `cmd_*` function writes its files under the
//! output directory and prints a short report; the library functions behind
//! them return plain values for reuse in tests.

use std::path::{Path, PathBuf};
use std::time::Instant;

use gbc_core::analytic::{conjugate_posterior, AnalyticPosterior, NormalNormalModel};
use gbc_core::baselines::{
    abc_proposals, fiducial_rejection, summary_scales, w1_bootstrap_se, w1_distance, AbcProposals, DataGenerator,
    FiducialConfig, FiducialResult, LocationModel, NormalSummaryModel, ScaledLocationModel,
};
use gbc_core::exec::{self, Execution};
use gbc_core::models::{
    build_simulator, generate_reference_table, quantile_index_replicates, simulate_replicates, EpidemicScenario,
    PriorDist, ReferenceTable, Simulator, TableFormat, TrajectorySet,
};
use gbc_core::numerics::{gradcheck, lhs_sample, Activation, DenseMatrix, FeedForwardNet, GradCheckReport, RngStream};
use gbc_core::quantile::{
    default_tau_grid, posterior_quantile_curve, AutoregressiveQuantileModel, sample_posterior, train_autoregressive, train_iqn_on,
    ConditionalQuantile, ImplicitQuantileNet,
};
use gbc_core::stats::{ks_pvalue, ks_statistic, quantile_sorted, sorted_copy};
use gbc_core::summaries::{
    fit_linear_summary_with, fit_posterior_mean_net, SummaryMap, SummaryNetSpec, YTransform, LINEAR_RIDGE,
};
use gbc_core::train::{TrainOptions, TrainReport};

use crate::checkpoint::{Checkpoint, Provenance};
use crate::config::{FiducialModelChoice, RunConfig, SummaryChoice};
use crate::csv::{read_observation, Cell, Csv};
use crate::{CliError, ConfigError};

const TABLE_STREAM: u64 = 0;
const SAMPLE_STREAM: u64 = 0x5A;
const OBSERVATION_STREAM: u64 = 0xB5;
const PILOT_STREAM: u64 = 0xB1;
const ABC_STREAM: u64 = 0xABC;
const FIDUCIAL_STREAM: u64 = 0xF1D;
const EPIDEMIC_STREAM: u64 = 0xE1;
const RESAMPLE_STREAM: u64 = 0xE2;
const GRADCHECK_STREAM: u64 = 0x6C;
const SE_STREAM: u64 = 0x5E;

/// Quadrature nodes for Wasserstein distances.
pub const W1_GRID: usize = 1000;
/// Benchmark thresholds in units of the posterior sd.
pub const NET_QUANTILE_TOLERANCE: f64 = 0.15;
pub const NET_W1_TOLERANCE: f64 = 0.1;
pub const ABC_W1_TOLERANCE: f64 = 0.2;
pub const EPIDEMIC_COVERAGE_FLOOR: f64 = 0.8;
pub const GRADCHECK_TOLERANCE: f64 = 1e-5;

/// Parallel unless exactly one thread was requested.
pub fn execution(threads: usize) -> Execution {
    if threads == 1 {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn config_error(section: &str, key: &str, msg: impl Into<String>) -> CliError {
    CliError::Config(ConfigError::Invalid {
        section: section.into(),
        key: key.into(),
        msg: msg.into(),
    })
}

fn ensure_out_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = cfg.out_dir();
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

fn simulator(cfg: &RunConfig) -> Result<Box<dyn Simulator>, CliError> {
    Ok(build_simulator(&cfg.run.simulator, &cfg.simulator)?)
}

fn theta_names(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("theta{i}")).collect()
}

/// The reference table described by `cfg`; row `i` uses substream `i` of
/// stream `(seed, 0)`.
pub fn reference_table(cfg: &RunConfig, execution: Execution) -> Result<ReferenceTable, CliError> {
    let sim = simulator(cfg)?;
    Ok(generate_reference_table(
        &cfg.prior,
        sim.as_ref(),
        cfg.run.rows,
        &RngStream::new(cfg.run.seed, TABLE_STREAM),
        execution,
    )?)
}

pub fn load_table(cfg: &RunConfig) -> Result<ReferenceTable, CliError> {
    let path = cfg.table_path();
    if !path.exists() {
        return Err(CliError::Data(format!("{}: no reference table, run gen-table first", path.display())));
    }
    let table = ReferenceTable::load(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if table.simulator != cfg.run.simulator {
        return Err(CliError::Data(format!(
            "{}: table was simulated by '{}', config names '{}'",
            path.display(),
            table.simulator,
            cfg.run.simulator
        )));
    }
    Ok(table)
}

/// `S(y) = ȳ` after `transform`.
pub fn mean_summary(n: usize, transform: YTransform) -> SummaryMap {
    let b = DenseMatrix::from_vec(1, n, vec![1.0 / n as f64; n]).expect("1 × n");
    SummaryMap::linear(b, vec![0.0])
        .expect("one intercept")
        .with_transform(transform)
}

/// Builds the configured summary. Linear and network summaries are fitted on
/// `table`; the network also returns its training report.
pub fn build_summary(
    cfg: &RunConfig,
    table: Option<&ReferenceTable>,
    n: usize,
) -> Result<(SummaryMap, Option<TrainReport>), CliError> {
    let s = &cfg.summary;
    let need = |kind: SummaryChoice| {
        table.ok_or_else(|| CliError::Data(format!("summary kind '{}' needs a reference table", kind.name())))
    };
    Ok(match s.kind {
        SummaryChoice::Mean => (mean_summary(n, s.transform), None),
        SummaryChoice::Identity => (SummaryMap::identity(n).with_transform(s.transform), None),
        SummaryChoice::Linear => (fit_linear_summary_with(need(s.kind)?, s.transform, LINEAR_RIDGE)?, None),
        SummaryChoice::Network => {
            let spec = SummaryNetSpec {
                hidden: s.hidden.clone(),
                transform: s.transform,
            };
            let opts = TrainOptions {
                epochs: s.epochs,
                ..cfg.train_options()
            };
            let (map, report) = fit_posterior_mean_net(need(s.kind)?, &spec, &opts)?;
            (map, Some(report))
        }
    })
}

/// Observed data: the `sample.y_obs` file, or one draw from the simulator at
/// `sample.theta_true`.
pub fn observation(cfg: &RunConfig, sim: &dyn Simulator) -> Result<Vec<f64>, CliError> {
    let y = match &cfg.sample.y_obs {
        Some(p) => read_observation(Path::new(p))?,
        None => sim.simulate(
            &cfg.sample.theta_true,
            &mut RngStream::new(cfg.run.seed, OBSERVATION_STREAM),
        )?,
    };
    if y.len() != sim.output_dim() {
        return Err(CliError::Data(format!(
            "observation has {} values, simulator '{}' produces {}",
            y.len(),
            sim.name(),
            sim.output_dim()
        )));
    }
    Ok(y)
}

/// Conjugate posterior for the normal-normal simulator with a normal prior.
pub fn analytic_reference(cfg: &RunConfig, y: &[f64]) -> Result<Option<AnalyticPosterior>, CliError> {
    if cfg.run.simulator != "normal-normal" {
        return Ok(None);
    }
    let PriorDist::Normal { mean, variance } = cfg.prior.coords()[0] else {
        return Ok(None);
    };
    let sigma2 = cfg.simulator.get("sigma2").copied().unwrap_or(10.0);
    let model = NormalNormalModel::new(mean, variance, sigma2, y)?;
    Ok(Some(conjugate_posterior(&model)))
}

fn reference_quantile(post: &AnalyticPosterior) -> impl Fn(f64) -> f64 + '_ {
    move |u| post.quantile(u).expect("level inside (0, 1)")
}

// ---------------------------------------------------------------- gen-table

pub fn cmd_gen_table(cfg: &RunConfig, execution: Execution) -> Result<(), CliError> {
    ensure_out_dir(cfg)?;
    let table = reference_table(cfg, execution)?;
    let path = cfg.table_path();
    table
        .save(&path, TableFormat::from_path(&path))
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    println!(
        "wrote {} ({} rows, theta dim {}, y dim {})",
        path.display(),
        table.len(),
        table.theta_dim(),
        table.y_dim()
    );
    Ok(())
}

// -------------------------------------------------------------- fit-summary

pub fn cmd_fit_summary(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = ensure_out_dir(cfg)?;
    let table = load_table(cfg)?;
    let (summary, report) = build_summary(cfg, Some(&table), table.y_dim())?;
    let s = summary.apply_rows(&table.y)?;
    let mut header: Vec<String> = (1..=s.cols()).map(|i| format!("s{i}")).collect();
    header.extend(theta_names(table.theta_dim()));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = Csv::new(&header);
    for i in 0..table.len() {
        let mut row = s.row(i).to_vec();
        row.extend_from_slice(table.theta.row(i));
        csv.real_row(&row);
    }
    csv.write(&dir.join("summary.csv"))?;
    let ck = Checkpoint {
        provenance: Provenance {
            table_seed: table.seed,
            config_hash: cfg.hash(),
        },
        summary,
        components: Vec::new(),
    };
    let path = dir.join("summary.gbcq");
    ck.save(&path).map_err(|source| CliError::Checkpoint { path: path.clone(), source })?;
    println!("summary '{}' with {} outputs written to {}", cfg.summary.kind.name(), s.cols(), path.display());
    if let Some(r) = report {
        println!(
            "posterior-mean net: final loss {:.6}, held-out loss {}",
            r.final_loss(),
            r.holdout_loss.map_or("n/a".into(), |l| format!("{l:.6}"))
        );
    }
    Ok(())
}

// -------------------------------------------------------------------- train

/// Summary plus one quantile network per θ coordinate, with the reports of
/// each network.
pub fn train_model(cfg: &RunConfig, table: &ReferenceTable) -> Result<(Checkpoint, Vec<TrainReport>), CliError> {
    let (summary, _) = build_summary(cfg, Some(table), table.y_dim())?;
    let (model, reports) = train_autoregressive(table, summary, &cfg.network, &cfg.train_options())?;
    let ck = Checkpoint {
        provenance: Provenance {
            table_seed: table.seed,
            config_hash: cfg.hash(),
        },
        summary: model.summary().clone(),
        components: model.components().to_vec(),
    };
    Ok((ck, reports))
}

pub fn cmd_train(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = ensure_out_dir(cfg)?;
    let table = load_table(cfg)?;
    let start = Instant::now();
    let (ck, reports) = train_model(cfg, &table)?;
    let path = cfg.checkpoint_path();
    ck.save(&path).map_err(|source| CliError::Checkpoint { path: path.clone(), source })?;

    let mut header = vec!["epoch".to_string()];
    header.extend((1..=reports.len()).map(|i| format!("loss_theta{i}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = Csv::new(&header);
    let epochs = reports.iter().map(|r| r.loss_trace.len()).max().unwrap_or(0);
    for e in 0..epochs {
        let mut cells = vec![Cell::Int(e as u64 + 1)];
        cells.extend(reports.iter().map(|r| r.loss_trace.get(e).map_or(Cell::Empty, |&l| Cell::Real(l))));
        csv.row(&cells);
    }
    csv.write(&dir.join("loss_trace.csv"))?;
    println!("trained {} networks in {:.1} s, checkpoint {}", reports.len(), start.elapsed().as_secs_f64(), path.display());
    for (k, r) in reports.iter().enumerate() {
        println!(
            "theta{}: final loss {:.6}, held-out loss {}",
            k + 1,
            r.final_loss(),
            r.holdout_loss.map_or("n/a".into(), |l| format!("{l:.6}"))
        );
    }
    Ok(())
}

// ------------------------------------------------------------------- sample

pub fn cmd_sample(cfg: &RunConfig, execution: Execution) -> Result<(), CliError> {
    let dir = ensure_out_dir(cfg)?;
    let path = cfg.checkpoint_path();
    let ck = Checkpoint::load(&path).map_err(|source| CliError::Checkpoint { path: path.clone(), source })?;
    let model = ck.model()?;
    let sim = simulator(cfg)?;
    let y = observation(cfg, sim.as_ref())?;
    let draws = sample_posterior(
        &model,
        &y,
        cfg.sample.draws,
        &RngStream::new(cfg.run.seed, SAMPLE_STREAM),
        execution,
    )?;
    let d = model.theta_dim();
    let names = theta_names(d);
    let header: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut csv = Csv::new(&header);
    for row in draws.iter_rows() {
        csv.real_row(row);
    }
    csv.write(&dir.join("samples.csv"))?;

    let mut qheader = vec!["tau"];
    qheader.extend(header.iter().copied());
    let mut q = Csv::new(&qheader);
    if draws.rows() > 0 {
        let columns: Vec<Vec<f64>> = (0..d).map(|c| sorted_copy(&draws.column(c))).collect();
        for &tau in &cfg.sample.taus {
            let mut row = vec![tau];
            row.extend(columns.iter().map(|c| quantile_sorted(c, tau)));
            q.real_row(&row);
        }
    }
    q.write(&dir.join("quantiles.csv"))?;
    println!("{} posterior draws of {d} coordinates written to {}", draws.rows(), dir.display());
    Ok(())
}

// ---------------------------------------------------------------------- abc

/// One tolerance of an ABC sweep, with the bootstrap error of W1.
#[derive(Debug, Clone, PartialEq)]
pub struct AbcSweepLine {
    pub epsilon: f64,
    pub accepted: usize,
    pub acceptance_rate: f64,
    pub w1: Option<f64>,
    pub w1_se: Option<f64>,
}

/// True when W1 never rises by more than two combined standard errors from
/// one tolerance to the next smaller one.
pub fn sweep_monotone(lines: &[AbcSweepLine]) -> bool {
    lines.windows(2).all(|w| match (w[0].w1, w[1].w1) {
        (Some(a), Some(b)) => {
            let se = (w[0].w1_se.unwrap_or(0.0).powi(2) + w[1].w1_se.unwrap_or(0.0).powi(2)).sqrt();
            b <= a + 2.0 * se
        }
        _ => true,
    })
}

/// Applies `epsilons` (sorted decreasing) to one set of proposals; W1 of the
/// first coordinate is computed when a reference law is given.
pub fn abc_sweep(
    proposals: &AbcProposals,
    epsilons: &[f64],
    reference: Option<&dyn Fn(f64) -> f64>,
    bootstrap: usize,
    se_rng: &RngStream,
) -> Result<Vec<AbcSweepLine>, CliError> {
    let mut eps = epsilons.to_vec();
    eps.sort_by(|a, b| b.total_cmp(a));
    eps.iter()
        .enumerate()
        .map(|(j, &e)| {
            let res = proposals.accept(e);
            let (w1, w1_se) = match reference {
                Some(q) if !res.is_empty() => {
                    let x = res.accepted.column(0);
                    let w = w1_distance(&x, q, W1_GRID)?;
                    let se = if x.len() > 1 {
                        Some(w1_bootstrap_se(&x, q, W1_GRID, bootstrap, &se_rng.substream(j as u64))?)
                    } else {
                        None
                    };
                    (Some(w), se)
                }
                _ => (None, None),
            };
            Ok(AbcSweepLine {
                epsilon: e,
                accepted: res.indices.len(),
                acceptance_rate: res.acceptance_rate,
                w1,
                w1_se,
            })
        })
        .collect()
}

fn sweep_csv(lines: &[AbcSweepLine]) -> Csv {
    let mut csv = Csv::new(&["epsilon", "accepted", "acceptance_rate", "w1", "w1_se"]);
    for l in lines {
        csv.row(&[
            Cell::Real(l.epsilon),
            Cell::Int(l.accepted as u64),
            Cell::Real(l.acceptance_rate),
            l.w1.map_or(Cell::Empty, Cell::Real),
            l.w1_se.map_or(Cell::Empty, Cell::Real),
        ]);
    }
    csv
}

pub fn cmd_abc(cfg: &RunConfig, execution: Execution) -> Result<(), CliError> {
    let dir = ensure_out_dir(cfg)?;
    let sim = simulator(cfg)?;
    let table = match cfg.summary.kind {
        SummaryChoice::Linear | SummaryChoice::Network => Some(load_table(cfg)?),
        _ => None,
    };
    let (summary, _) = build_summary(cfg, table.as_ref(), sim.output_dim())?;
    let pilot = generate_reference_table(
        &cfg.prior,
        sim.as_ref(),
        cfg.abc.pilot,
        &RngStream::new(cfg.run.seed, PILOT_STREAM),
        execution,
    )?;
    let scale = summary_scales(&pilot, &summary)?;
    let y = observation(cfg, sim.as_ref())?;
    let proposals = abc_proposals(
        sim.as_ref(),
        &cfg.prior,
        &summary,
        &y,
        &scale,
        cfg.abc.budget,
        &RngStream::new(cfg.run.seed, ABC_STREAM),
        execution,
    )?;
    let post = analytic_reference(cfg, &y)?;
    let q = post.as_ref().map(reference_quantile);
    let lines = abc_sweep(
        &proposals,
        &cfg.abc.epsilons,
        q.as_ref().map(|f| f as &dyn Fn(f64) -> f64),
        cfg.abc.bootstrap,
        &RngStream::new(cfg.run.seed, SE_STREAM),
    )?;
    sweep_csv(&lines).write(&dir.join("abc_sweep.csv"))?;

    let last = lines.last().expect("at least one tolerance").epsilon;
    let res = proposals.accept(last);
    let mut names = theta_names(proposals.theta.cols());
    names.push("distance".into());
    let header: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut csv = Csv::new(&header);
    for (r, &dist) in res.distances.iter().enumerate() {
        let mut row = res.accepted.row(r).to_vec();
        row.push(dist);
        csv.real_row(&row);
    }
    csv.write(&dir.join("abc_draws.csv"))?;
    for l in &lines {
        println!(
            "epsilon {:<8} accepted {:>8} rate {:.5}{}",
            l.epsilon,
            l.accepted,
            l.acceptance_rate,
            l.w1.map_or(String::new(), |w| format!(" w1 {w:.5}"))
        );
    }
    if let Some(msg) = res.diagnostic() {
        println!("{msg}");
    }
    Ok(())
}

// ----------------------------------------------------------------- fiducial

/// Runs the configured fiducial rejection sampler.
pub fn fiducial_run(cfg: &RunConfig, execution: Execution) -> Result<FiducialResult, CliError> {
    let f = &cfg.fiducial;
    let (g, bounds): (Box<dyn DataGenerator>, Vec<(f64, f64)>) = match f.model {
        FiducialModelChoice::Location => (Box::new(LocationModel), vec![(f.y[0] - 20.0, f.y[0] + 20.0)]),
        FiducialModelChoice::NormalSummary => {
            let sd = f.y[1].sqrt();
            (
                Box::new(NormalSummaryModel { n: f.n }),
                vec![(f.y[0] - 20.0 * sd, f.y[0] + 20.0 * sd), (1e-6 * sd, 20.0 * sd)],
            )
        }
    };
    let fc = FiducialConfig {
        epsilon: f.epsilon,
        bounds,
        per_coordinate: f.per_coordinate,
        tolerance: f.tolerance,
        max_iter: f.max_iter,
    };
    Ok(fiducial_rejection(
        g.as_ref(),
        &f.y,
        &fc,
        f.budget,
        &RngStream::new(cfg.run.seed, FIDUCIAL_STREAM),
        execution,
    )?)
}

pub fn cmd_fiducial(cfg: &RunConfig, execution: Execution) -> Result<(), CliError> {
    let dir = ensure_out_dir(cfg)?;
    let res = fiducial_run(cfg, execution)?;
    let names = theta_names(res.draws.cols());
    let header: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut csv = Csv::new(&header);
    for row in res.draws.iter_rows() {
        csv.real_row(row);
    }
    csv.write(&dir.join("fiducial_draws.csv"))?;
    println!(
        "fiducial: {} attempted, {} kept, {} rejected, {} not converged",
        res.attempted,
        res.draws.rows(),
        res.rejected,
        res.nonconverged
    );
    if cfg.fiducial.model == FiducialModelChoice::Location && res.draws.rows() > 0 {
        let y = cfg.fiducial.y[0];
        let d = ks_statistic(&res.draws.column(0), |x| gbc_core::analytic::normal_cdf(x - y));
        println!("KS vs N({y}, 1): D = {d:.5}, p = {:.4}", ks_pvalue(d, res.draws.rows()));
    }
    Ok(())
}

// --------------------------------------------------------- benchmark-normal

/// W1 distances of the three posterior approximations to the conjugate
/// posterior, with `S(y) = ȳ` for all of them.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalBenchmark {
    pub y_obs: Vec<f64>,
    pub posterior: AnalyticPosterior,
    pub net_draws: usize,
    pub net_w1: f64,
    pub net_w1_se: f64,
    /// Largest `|F̂⁻¹(τ) − F⁻¹(τ)|` over the default τ grid.
    pub net_max_quantile_error: f64,
    pub train_seconds: f64,
    pub abc: Vec<AbcSweepLine>,
    pub fiducial_draws: usize,
    pub fiducial_w1: Option<f64>,
    pub fiducial_w1_se: Option<f64>,
    pub model: AutoregressiveQuantileModel,
}

impl NormalBenchmark {
    /// Thresholds that were not met, in words.
    pub fn violations(&self) -> Vec<String> {
        let sd = self.posterior.sd();
        let mut v = Vec::new();
        if !(self.net_max_quantile_error < NET_QUANTILE_TOLERANCE * sd) {
            v.push(format!(
                "net quantile error {:.4} sd >= {NET_QUANTILE_TOLERANCE}",
                self.net_max_quantile_error / sd
            ));
        }
        if !(self.net_w1 < NET_W1_TOLERANCE * sd) {
            v.push(format!("net W1 {:.4} sd >= {NET_W1_TOLERANCE}", self.net_w1 / sd));
        }
        if !sweep_monotone(&self.abc) {
            v.push("ABC W1 increases along the tolerance sweep".into());
        }
        match self.abc.last().and_then(|l| l.w1) {
            Some(w) if w < ABC_W1_TOLERANCE * sd => {}
            Some(w) => v.push(format!("ABC final W1 {:.4} sd >= {ABC_W1_TOLERANCE}", w / sd)),
            None => v.push("ABC accepted nothing at the smallest tolerance".into()),
        }
        v
    }
}

/// Runs the network, ABC and fiducial approximations on one simulated
/// normal-normal data set. Network training is sequential by construction;
/// `execution` covers simulation and sampling.
pub fn normal_benchmark(cfg: &RunConfig, execution: Execution) -> Result<NormalBenchmark, CliError> {
    if cfg.run.simulator != "normal-normal" {
        return Err(config_error("run", "simulator", "benchmark-normal needs simulator = normal-normal"));
    }
    let sim = simulator(cfg)?;
    let y = observation(cfg, sim.as_ref())?;
    let post = analytic_reference(cfg, &y)?
        .ok_or_else(|| config_error("prior", "theta1", "benchmark-normal needs a normal prior"))?;
    let q = reference_quantile(&post);
    let n = y.len();
    let summary = mean_summary(n, YTransform::Identity);
    let se_rng = RngStream::new(cfg.run.seed, SE_STREAM);

    let table = reference_table(cfg, execution)?;
    let start = Instant::now();
    let (model, _) = train_autoregressive(&table, summary.clone(), &cfg.network, &cfg.train_options())?;
    let train_seconds = start.elapsed().as_secs_f64();
    let draws = sample_posterior(
        &model,
        &y,
        cfg.sample.draws,
        &RngStream::new(cfg.run.seed, SAMPLE_STREAM),
        execution,
    )?
    .column(0);
    if draws.is_empty() {
        return Err(CliError::Data("benchmark-normal needs sample.draws >= 1".into()));
    }
    let net_w1 = w1_distance(&draws, &q, W1_GRID)?;
    let net_w1_se = w1_bootstrap_se(&draws, &q, W1_GRID, cfg.abc.bootstrap, &se_rng.substream(100))?;
    let s_obs = summary.apply(&y)?;
    let curve = posterior_quantile_curve(&model.components()[0] as &dyn ConditionalQuantile, &s_obs, &default_tau_grid())?;
    let net_max_quantile_error = curve
        .taus
        .iter()
        .zip(&curve.values)
        .map(|(&t, &v)| (v - q(t)).abs())
        .fold(0.0, f64::max);

    let scale = summary_scales(&table, &summary)?;
    let proposals = abc_proposals(
        sim.as_ref(),
        &cfg.prior,
        &summary,
        &y,
        &scale,
        cfg.abc.budget,
        &RngStream::new(cfg.run.seed, ABC_STREAM),
        execution,
    )?;
    let abc = abc_sweep(&proposals, &cfg.abc.epsilons, Some(&q), cfg.abc.bootstrap, &se_rng)?;

    let sigma2 = cfg.simulator.get("sigma2").copied().unwrap_or(10.0);
    let se_mean = (sigma2 / n as f64).sqrt();
    let ybar = s_obs[0];
    let g = ScaledLocationModel { scale: se_mean };
    let fc = FiducialConfig {
        epsilon: cfg.fiducial.epsilon,
        bounds: vec![(ybar - 20.0 * se_mean, ybar + 20.0 * se_mean)],
        per_coordinate: cfg.fiducial.per_coordinate,
        tolerance: cfg.fiducial.tolerance,
        max_iter: cfg.fiducial.max_iter,
    };
    let fid = fiducial_rejection(
        &g,
        &[ybar],
        &fc,
        cfg.fiducial.budget,
        &RngStream::new(cfg.run.seed, FIDUCIAL_STREAM),
        execution,
    )?;
    let fx = fid.draws.column(0);
    let (fiducial_w1, fiducial_w1_se) = if fx.len() > 1 {
        (
            Some(w1_distance(&fx, &q, W1_GRID)?),
            Some(w1_bootstrap_se(&fx, &q, W1_GRID, cfg.abc.bootstrap, &se_rng.substream(200))?),
        )
    } else {
        (None, None)
    };

    Ok(NormalBenchmark {
        y_obs: y,
        posterior: post,
        net_draws: draws.len(),
        net_w1,
        net_w1_se,
        net_max_quantile_error,
        train_seconds,
        abc,
        fiducial_draws: fx.len(),
        fiducial_w1,
        fiducial_w1_se,
        model,
    })
}

pub fn normal_benchmark_csv(b: &NormalBenchmark) -> Csv {
    let sd = b.posterior.sd();
    let mut csv = Csv::new(&["method", "epsilon", "draws", "w1", "w1_se", "w1_over_sd", "max_quantile_error"]);
    csv.row(&[
        Cell::Text("analytic"),
        Cell::Real(0.0),
        Cell::Int(0),
        Cell::Real(0.0),
        Cell::Real(0.0),
        Cell::Real(0.0),
        Cell::Real(0.0),
    ]);
    csv.row(&[
        Cell::Text("net"),
        Cell::Empty,
        Cell::Int(b.net_draws as u64),
        Cell::Real(b.net_w1),
        Cell::Real(b.net_w1_se),
        Cell::Real(b.net_w1 / sd),
        Cell::Real(b.net_max_quantile_error),
    ]);
    for l in &b.abc {
        csv.row(&[
            Cell::Text("abc"),
            Cell::Real(l.epsilon),
            Cell::Int(l.accepted as u64),
            l.w1.map_or(Cell::Empty, Cell::Real),
            l.w1_se.map_or(Cell::Empty, Cell::Real),
            l.w1.map_or(Cell::Empty, |w| Cell::Real(w / sd)),
            Cell::Empty,
        ]);
    }
    csv.row(&[
        Cell::Text("fiducial"),
        Cell::Empty,
        Cell::Int(b.fiducial_draws as u64),
        b.fiducial_w1.map_or(Cell::Empty, Cell::Real),
        b.fiducial_w1_se.map_or(Cell::Empty, Cell::Real),
        b.fiducial_w1.map_or(Cell::Empty, |w| Cell::Real(w / sd)),
        Cell::Empty,
    ]);
    csv
}

pub fn cmd_benchmark_normal(cfg: &RunConfig, execution: Execution) -> Result<(), CliError> {
    let dir = ensure_out_dir(cfg)?;
    let b = normal_benchmark(cfg, execution)?;
    normal_benchmark_csv(&b).write(&dir.join("benchmark_normal.csv"))?;
    let sd = b.posterior.sd();
    println!("posterior N({:.5}, {:.5}^2)", b.posterior.mean, sd);
    println!(
        "net: W1 {:.4} sd, max quantile error {:.4} sd, training {:.1} s",
        b.net_w1 / sd,
        b.net_max_quantile_error / sd,
        b.train_seconds
    );
    for l in &b.abc {
        println!(
            "abc eps {:<6} accepted {:>7} W1 {}",
            l.epsilon,
            l.accepted,
            l.w1.map_or("n/a".into(), |w| format!("{:.4} sd", w / sd))
        );
    }
    println!(
        "fiducial: {} draws, W1 {}",
        b.fiducial_draws,
        b.fiducial_w1.map_or("n/a".into(), |w| format!("{:.4} sd", w / sd))
    );
    let v = b.violations();
    if v.is_empty() {
        Ok(())
    } else {
        Err(CliError::Acceptance(v.join("; ")))
    }
}

// ------------------------------------------------------- benchmark-epidemic

/// Predicted bands for one held-out scenario, indexed `[prob][week]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HoldoutPrediction {
    pub scenario: usize,
    pub theta: Vec<f64>,
    pub observed: Vec<Vec<f64>>,
    pub lower: Vec<Vec<f64>>,
    pub median: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
}

impl HoldoutPrediction {
    /// (covered cells, all cells)
    pub fn coverage(&self) -> (usize, usize) {
        let mut hit = 0;
        let mut all = 0;
        for k in 0..self.observed.len() {
            for t in 0..self.observed[k].len() {
                all += 1;
                let o = self.observed[k][t];
                if self.lower[k][t] <= o && o <= self.upper[k][t] {
                    hit += 1;
                }
            }
        }
        (hit, all)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpidemicBenchmark {
    pub probs: Vec<f64>,
    pub holdouts: Vec<HoldoutPrediction>,
    /// Calibrated widening of the band on `log1p` scale, one per level.
    pub widening: Vec<f64>,
    pub train_rows: usize,
    pub seconds: f64,
}

impl EpidemicBenchmark {
    pub fn coverage(&self) -> f64 {
        let (hit, all) = self
            .holdouts
            .iter()
            .map(HoldoutPrediction::coverage)
            .fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        hit as f64 / all.max(1) as f64
    }
}

fn emulator_input(theta: &[f64], alpha: f64, week: usize, weeks: usize) -> Vec<f64> {
    let mut x = theta.to_vec();
    x.push(alpha);
    x.push((week + 1) as f64 / weeks as f64);
    x
}

/// `[lower, median, upper]` of `log1p` counts, indexed `[prob][week]`.
type LogBands = [Vec<Vec<f64>>; 3];

fn log_bands(net: &ImplicitQuantileNet, theta: &[f64], probs: &[f64], weeks: usize, band: f64) -> Result<LogBands, CliError> {
    let taus = [(1.0 - band) / 2.0, 0.5, (1.0 + band) / 2.0];
    let mut out = [
        vec![vec![0.0; weeks]; probs.len()],
        vec![vec![0.0; weeks]; probs.len()],
        vec![vec![0.0; weeks]; probs.len()],
    ];
    for (k, &p) in probs.iter().enumerate() {
        for t in 0..weeks {
            let xi = emulator_input(theta, p, t, weeks);
            let mut v = taus.iter().map(|&tau| net.eval(&xi, tau)).collect::<Result<Vec<_>, _>>()?;
            v.sort_by(f64::total_cmp);
            for (b, val) in out.iter_mut().zip(v) {
                b[k][t] = val;
            }
        }
    }
    Ok(out)
}

/// Per-level widening from conformity scores `max(lo − o, o − hi)` on
/// `log1p` scale: the `⌈(m + 1)·band⌉`-th smallest of the `m` scores.
fn conformal_widening(scores: &[Vec<f64>], band: f64) -> Vec<f64> {
    scores
        .iter()
        .map(|s| {
            if s.is_empty() {
                return 0.0;
            }
            let mut s = s.clone();
            s.sort_by(f64::total_cmp);
            let rank = (((s.len() + 1) as f64 * band).ceil() as usize).clamp(1, s.len());
            s[rank - 1]
        })
        .collect()
}

/// Latin-hypercube scenarios with replicate curves reduced to quantile
/// trajectories. A quantile network on `[θ, α, week]` is trained on `log1p`
/// of bootstrap-resampled quantile trajectories of the fitting scenarios.
/// Its central band covers the sampling noise of an empirical quantile but
/// not the emulator's error between design points, so the band is widened
/// per quantile level by split-conformal calibration on `calibration`
/// further scenarios. The last `holdout` scenarios are predicted.
pub fn epidemic_benchmark(cfg: &RunConfig, execution: Execution) -> Result<EpidemicBenchmark, CliError> {
    let start = Instant::now();
    let e = &cfg.epidemic;
    let population = cfg.simulator.get("population").copied().unwrap_or(EpidemicScenario::DEFAULT_POPULATION as f64);
    let weeks = cfg.simulator.get("weeks").copied().unwrap_or(EpidemicScenario::DEFAULT_WEEKS as f64);
    if !(population >= 1.0 && weeks >= 1.0 && population.fract() == 0.0 && weeks.fract() == 0.0) {
        return Err(config_error("simulator", "population", "population and weeks must be positive integers"));
    }
    let (population, weeks) = (population as u64, weeks as usize);
    let rng = RngStream::new(cfg.run.seed, EPIDEMIC_STREAM);
    let design = lhs_sample(&EpidemicScenario::RANGES, e.scenarios, &mut rng.substream(u64::MAX))?;
    let scenarios: Vec<EpidemicScenario> = design
        .iter_rows()
        .map(EpidemicScenario::from_slice)
        .collect::<Result<_, _>>()?;
    let sets = exec::try_map_indexed(execution, scenarios.len(), |s| {
        simulate_replicates(&scenarios[s], s, population, weeks, e.replicates, &rng.substream(s as u64), Execution::Sequential)
    })?;

    let n_train = scenarios.len() - e.holdout;
    let n_fit = n_train - e.calibration;
    let resample = RngStream::new(cfg.run.seed, RESAMPLE_STREAM);
    let blocks = exec::try_map_indexed(execution, n_fit * e.bootstrap, |j| {
        let set = &sets[j / e.bootstrap];
        let mut r = resample.substream(j as u64);
        let boot = TrajectorySet {
            scenario_id: set.scenario_id,
            curves: (0..set.replicates()).map(|_| set.curves[r.below(set.replicates())].clone()).collect(),
        };
        quantile_index_replicates(&boot, &e.probs).map(|(q, _)| q)
    })?;
    let cols = EpidemicScenario::DIM + 2;
    let mut x = Vec::with_capacity(blocks.len() * e.probs.len() * weeks * cols);
    let mut target = Vec::with_capacity(blocks.len() * e.probs.len() * weeks);
    for (j, q) in blocks.iter().enumerate() {
        let theta = design.row(j / e.bootstrap);
        for (k, &p) in e.probs.iter().enumerate() {
            for t in 0..weeks {
                x.extend(emulator_input(theta, p, t, weeks));
                target.push(q[k][t].ln_1p());
            }
        }
    }
    let features = DenseMatrix::from_vec(target.len(), cols, x)?;
    let opts = TrainOptions {
        epochs: e.epochs,
        ..cfg.train_options()
    };
    let (net, _) = train_iqn_on(&features, &target, &cfg.network, &opts, 0)?;

    let mut scores = vec![Vec::new(); e.probs.len()];
    for s in n_fit..n_train {
        let (observed, _) = quantile_index_replicates(&sets[s], &e.probs)?;
        let [lo, _, hi] = log_bands(&net, design.row(s), &e.probs, weeks, e.band)?;
        for (k, sk) in scores.iter_mut().enumerate() {
            for t in 0..weeks {
                let o = observed[k][t].ln_1p();
                sk.push((lo[k][t] - o).max(o - hi[k][t]));
            }
        }
    }
    let widening = conformal_widening(&scores, e.band);

    let holdouts = (n_train..scenarios.len())
        .map(|s| -> Result<HoldoutPrediction, CliError> {
            let (observed, _) = quantile_index_replicates(&sets[s], &e.probs)?;
            let theta = design.row(s).to_vec();
            let [mut lower, mut median, mut upper] = log_bands(&net, &theta, &e.probs, weeks, e.band)?;
            for (k, w) in widening.iter().enumerate() {
                for t in 0..weeks {
                    let m = median[k][t];
                    lower[k][t] = (lower[k][t] - w).min(m).exp_m1().max(0.0);
                    upper[k][t] = (upper[k][t] + w).max(m).exp_m1().max(0.0);
                    median[k][t] = m.exp_m1().max(0.0);
                }
            }
            Ok(HoldoutPrediction {
                scenario: s,
                theta,
                observed,
                lower,
                median,
                upper,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EpidemicBenchmark {
        probs: e.probs.clone(),
        holdouts,
        widening,
        train_rows: target.len(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn cmd_benchmark_epidemic(cfg: &RunConfig, execution: Execution) -> Result<(), CliError> {
    let dir = ensure_out_dir(cfg)?;
    let b = epidemic_benchmark(cfg, execution)?;
    let mut cov = Csv::new(&["scenario", "cells", "covered", "coverage"]);
    for (i, h) in b.holdouts.iter().enumerate() {
        let mut csv = Csv::new(&["week", "prob", "observed", "lower", "median", "upper"]);
        for (k, &p) in b.probs.iter().enumerate() {
            for t in 0..h.observed[k].len() {
                csv.row(&[
                    Cell::Int(t as u64 + 1),
                    Cell::Real(p),
                    Cell::Real(h.observed[k][t]),
                    Cell::Real(h.lower[k][t]),
                    Cell::Real(h.median[k][t]),
                    Cell::Real(h.upper[k][t]),
                ]);
            }
        }
        csv.write(&dir.join(format!("epidemic_holdout_{}.csv", i + 1)))?;
        let (hit, all) = h.coverage();
        let name = h.scenario.to_string();
        cov.row(&[Cell::Text(&name), Cell::Int(all as u64), Cell::Int(hit as u64), Cell::Real(hit as f64 / all.max(1) as f64)]);
    }
    let (hit, all) = b
        .holdouts
        .iter()
        .map(HoldoutPrediction::coverage)
        .fold((0, 0), |a, c| (a.0 + c.0, a.1 + c.1));
    cov.row(&[Cell::Text("all"), Cell::Int(all as u64), Cell::Int(hit as u64), Cell::Real(b.coverage())]);
    cov.write(&dir.join("epidemic_coverage.csv"))?;
    let widening: Vec<String> = b.widening.iter().map(|w| format!("{w:.3}")).collect();
    println!("calibrated log1p widening per level: {}", widening.join(" "));
    println!(
        "{} held-out scenarios, band coverage {:.4} ({hit}/{all} cells), {} training rows, {:.1} s",
        b.holdouts.len(),
        b.coverage(),
        b.train_rows,
        b.seconds
    );
    if b.coverage() < EPIDEMIC_COVERAGE_FLOOR {
        return Err(CliError::Acceptance(format!(
            "band coverage {:.4} below {EPIDEMIC_COVERAGE_FLOOR}",
            b.coverage()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------- gradcheck

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckRow {
    pub dims: Vec<usize>,
    pub params: usize,
    pub report: GradCheckReport,
}

/// Finite-difference checks of `nets` random rectifier networks. Net `i`
/// (architecture, parameters, input and output weights) comes from substream
/// `i`.
pub fn gradcheck_suite(nets: usize, step: f64, seed: u64, execution: Execution) -> Result<Vec<GradcheckRow>, CliError> {
    let base = RngStream::new(seed, GRADCHECK_STREAM);
    exec::try_map_indexed(execution, nets, |i| -> Result<GradcheckRow, CliError> {
        let mut r = base.substream(i as u64);
        let depth = 1 + r.below(3);
        let mut dims = vec![1 + r.below(6)];
        dims.extend((0..depth - 1).map(|_| 1 + r.below(8)));
        dims.push(1 + r.below(3));
        let mut acts = vec![Activation::Rectifier; depth - 1];
        acts.push(if r.below(2) == 0 { Activation::Identity } else { Activation::Rectifier });
        let net = FeedForwardNet::new(&dims, &acts, &mut r)?;
        let x: Vec<f64> = (0..dims[0]).map(|_| r.standard_normal()).collect();
        let og: Vec<f64> = (0..dims[depth]).map(|_| r.standard_normal()).collect();
        let report = gradcheck(&net, &x, &og, step)?;
        Ok(GradcheckRow {
            params: net.param_count(),
            dims,
            report,
        })
    })
}

pub fn cmd_gradcheck(cfg: &RunConfig, execution: Execution) -> Result<(), CliError> {
    let dir = ensure_out_dir(cfg)?;
    let rows = gradcheck_suite(cfg.gradcheck.nets, cfg.gradcheck.step, cfg.run.seed, execution)?;
    let mut csv = Csv::new(&["net", "layers", "params", "checked", "skipped_kinks", "max_rel_error"]);
    let mut worst: f64 = 0.0;
    for (i, row) in rows.iter().enumerate() {
        let layers = row.dims.iter().map(ToString::to_string).collect::<Vec<_>>().join("-");
        csv.row(&[
            Cell::Int(i as u64),
            Cell::Text(&layers),
            Cell::Int(row.params as u64),
            Cell::Int(row.report.checked as u64),
            Cell::Int(row.report.skipped_kinks as u64),
            Cell::Real(row.report.max_rel_error),
        ]);
        worst = worst.max(row.report.max_rel_error);
    }
    csv.write(&dir.join("gradcheck.csv"))?;
    println!("{} nets checked, worst relative error {worst:.3e}", rows.len());
    if worst >= GRADCHECK_TOLERANCE {
        return Err(CliError::Acceptance(format!("gradient error {worst:.3e} >= {GRADCHECK_TOLERANCE:.0e}")));
    }
    Ok(())
}
