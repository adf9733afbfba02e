//! Chain-binomial SEIR surrogate for an agent-based outbreak model, and the
//! quantile indexing that turns stochastic replicates into a deterministic
//! map of (θ, α).

use super::simulators::{binomial, Simulator};
use super::ModelError;
use crate::exec::{self, Execution};
use crate::numerics::RngStream;
use crate::stats::quantile_sorted;

/// Contacts per infective per week entering the per-susceptible infection
/// probability `1 - (1 - θ₁)^(C·I)`.
pub const CONTACT_FACTOR: f64 = 0.3;
/// Weekly probability that an exposed individual becomes infectious.
pub const LATENT_EXIT: f64 = 0.6;
/// Weekly probability that an infectious individual is removed.
pub const INFECTIOUS_EXIT: f64 = 0.5;
/// Travel reduction at the upper end of the θ₅ range.
pub const MAX_TRAVEL_REDUCTION: f64 = 0.5;

/// Default quantile levels of the indexed trajectories.
pub const DEFAULT_QUANTILE_PROBS: [f64; 5] = [0.05, 0.275, 0.5, 0.725, 0.95];

/// Disease-propagation inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpidemicScenario {
    /// Transmission probability per contact.
    pub transmission: f64,
    /// Initially infected individuals (rounded up).
    pub initial_infected: f64,
    /// Week at which the intervention starts (rounded up).
    pub intervention_delay: f64,
    /// Fractional reduction of transmission after the intervention.
    pub intervention_efficacy: f64,
    /// Drives the reduction in mixing after the intervention.
    pub travel_reduction: f64,
}

impl EpidemicScenario {
    pub const DIM: usize = 5;
    pub const DEFAULT_POPULATION: u64 = 100_000;
    pub const DEFAULT_WEEKS: usize = 56;
    pub const RANGES: [(f64, f64); 5] = [
        (3e-5, 8e-5),
        (1.0, 20.0),
        (2.0, 10.0),
        (0.1, 0.8),
        (3e-5, 8e-5),
    ];
    pub const NAMES: [&'static str; 5] = [
        "transmission",
        "initial_infected",
        "intervention_delay",
        "intervention_efficacy",
        "travel_reduction",
    ];

    pub fn from_slice(theta: &[f64]) -> Result<Self, ModelError> {
        if theta.len() != Self::DIM {
            return Err(ModelError::DimensionMismatch {
                expected: Self::DIM,
                found: theta.len(),
            });
        }
        Ok(Self {
            transmission: theta[0],
            initial_infected: theta[1],
            intervention_delay: theta[2],
            intervention_efficacy: theta[3],
            travel_reduction: theta[4],
        })
    }

    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.transmission,
            self.initial_infected,
            self.intervention_delay,
            self.intervention_efficacy,
            self.travel_reduction,
        ]
    }

    /// Errors unless every coordinate lies in its admissible range.
    pub fn check_ranges(&self) -> Result<(), ModelError> {
        for (i, (&v, &(lo, hi))) in self.to_vec().iter().zip(Self::RANGES.iter()).enumerate() {
            if !(v >= lo && v <= hi) {
                return Err(ModelError::OutOfRange {
                    name: Self::NAMES[i].to_string(),
                    value: v,
                    lo,
                    hi,
                });
            }
        }
        Ok(())
    }

    /// Multiplier on the contact factor once the intervention is active.
    pub fn travel_factor(&self) -> f64 {
        1.0 - MAX_TRAVEL_REDUCTION * self.travel_reduction / Self::RANGES[4].1
    }
}

/// Range checking is skipped only for boundary experiments in tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RangeCheck {
    #[default]
    Enforce,
    Skip,
}

/// One stochastic replicate; returns the cumulative number ever infected at
/// the end of each week.
pub fn simulate_epidemic(
    scenario: &EpidemicScenario,
    population: u64,
    weeks: usize,
    check: RangeCheck,
    rng: &mut RngStream,
) -> Result<Vec<f64>, ModelError> {
    if check == RangeCheck::Enforce {
        scenario.check_ranges()?;
    }
    if weeks == 0 {
        return Err(ModelError::InvalidParameter("weeks must be >= 1".into()));
    }
    let i0 = scenario.initial_infected.ceil();
    if !(i0 >= 0.0) || i0 > population as f64 {
        return Err(ModelError::InvalidParameter(format!(
            "initial infected {i0} exceeds population {population}"
        )));
    }
    let start = scenario.intervention_delay.ceil().max(0.0) as usize;
    let mut infectious = i0 as u64;
    let mut susceptible = population - infectious;
    let mut exposed = 0u64;
    let mut curve = Vec::with_capacity(weeks);
    for week in 0..weeks {
        let (beta, contacts) = if week >= start {
            (
                scenario.transmission * (1.0 - scenario.intervention_efficacy),
                CONTACT_FACTOR * scenario.travel_factor(),
            )
        } else {
            (scenario.transmission, CONTACT_FACTOR)
        };
        // 1 - (1-β)^(C·I) without cancellation for tiny β.
        let p_inf = -(contacts * infectious as f64 * (-beta).ln_1p()).exp_m1();
        let new_exposed = binomial(susceptible, p_inf, rng);
        let new_infectious = binomial(exposed, LATENT_EXIT, rng);
        let removed = binomial(infectious, INFECTIOUS_EXIT, rng);
        susceptible -= new_exposed;
        exposed = exposed + new_exposed - new_infectious;
        infectious = infectious + new_infectious - removed;
        curve.push((population - susceptible) as f64);
    }
    Ok(curve)
}

/// Replicate curves for one scenario, `curves[r][t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    pub scenario_id: usize,
    pub curves: Vec<Vec<f64>>,
}

impl TrajectorySet {
    pub fn replicates(&self) -> usize {
        self.curves.len()
    }

    pub fn weeks(&self) -> usize {
        self.curves.first().map_or(0, Vec::len)
    }
}

/// Runs `replicates` independent curves; replicate `r` uses `rng.substream(r)`.
pub fn simulate_replicates(
    scenario: &EpidemicScenario,
    scenario_id: usize,
    population: u64,
    weeks: usize,
    replicates: usize,
    rng: &RngStream,
    execution: Execution,
) -> Result<TrajectorySet, ModelError> {
    let curves = exec::try_map_indexed(execution, replicates, |r| {
        let mut s = rng.substream(r as u64);
        simulate_epidemic(scenario, population, weeks, RangeCheck::Enforce, &mut s)
    })?;
    Ok(TrajectorySet {
        scenario_id,
        curves,
    })
}

/// Pointwise empirical quantiles (linear interpolation between order
/// statistics) of the replicate curves at each level in `probs`.
///
/// Returns one trajectory per level together with the level itself, which
/// serves as the α coordinate.
pub fn quantile_index_replicates(
    set: &TrajectorySet,
    probs: &[f64],
) -> Result<(Vec<Vec<f64>>, Vec<f64>), ModelError> {
    if set.curves.is_empty() {
        return Err(ModelError::EmptyReplicates);
    }
    if probs.is_empty()
        || probs.iter().any(|&p| !(p > 0.0 && p < 1.0))
        || probs.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(ModelError::InvalidParameter(
            "quantile levels must be strictly increasing within (0, 1)".into(),
        ));
    }
    let weeks = set.weeks();
    if set.curves.iter().any(|c| c.len() != weeks) {
        return Err(ModelError::InvalidParameter("replicate curves differ in length".into()));
    }
    let mut out = vec![vec![0.0; weeks]; probs.len()];
    let mut column = vec![0.0; set.curves.len()];
    for t in 0..weeks {
        for (slot, c) in column.iter_mut().zip(&set.curves) {
            *slot = c[t];
        }
        column.sort_by(f64::total_cmp);
        for (k, &p) in probs.iter().enumerate() {
            out[k][t] = quantile_sorted(&column, p);
        }
    }
    Ok((out, probs.to_vec()))
}

/// `θ = (θ₁, …, θ₅) ↦` one replicate curve.
#[derive(Debug, Clone, PartialEq)]
pub struct EpidemicSimulator {
    population: u64,
    weeks: usize,
}

impl EpidemicSimulator {
    pub fn new(population: u64, weeks: usize) -> Result<Self, ModelError> {
        if weeks == 0 || population < EpidemicScenario::RANGES[1].1 as u64 {
            return Err(ModelError::InvalidParameter(format!(
                "epidemic needs weeks >= 1 and population >= {}",
                EpidemicScenario::RANGES[1].1
            )));
        }
        Ok(Self { population, weeks })
    }

    pub fn population(&self) -> u64 {
        self.population
    }

    pub fn weeks(&self) -> usize {
        self.weeks
    }
}

impl Simulator for EpidemicSimulator {
    fn name(&self) -> &str {
        "epidemic"
    }

    fn theta_dim(&self) -> usize {
        EpidemicScenario::DIM
    }

    fn output_dim(&self) -> usize {
        self.weeks
    }

    fn simulate(&self, theta: &[f64], rng: &mut RngStream) -> Result<Vec<f64>, ModelError> {
        let sc = EpidemicScenario::from_slice(theta)?;
        simulate_epidemic(&sc, self.population, self.weeks, RangeCheck::Enforce, rng)
    }
}

/// `Θ = (θ₁, …, θ₅, α) ↦` the pointwise α-quantile of `replicates` curves.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileTrajectorySimulator {
    inner: EpidemicSimulator,
    replicates: usize,
}

impl QuantileTrajectorySimulator {
    pub fn new(inner: EpidemicSimulator, replicates: usize) -> Result<Self, ModelError> {
        if replicates < 2 {
            return Err(ModelError::InvalidParameter("need at least 2 replicates".into()));
        }
        Ok(Self { inner, replicates })
    }
}

impl Simulator for QuantileTrajectorySimulator {
    fn name(&self) -> &str {
        "epidemic-quantile"
    }

    fn theta_dim(&self) -> usize {
        EpidemicScenario::DIM + 1
    }

    fn output_dim(&self) -> usize {
        self.inner.weeks
    }

    fn simulate(&self, theta: &[f64], rng: &mut RngStream) -> Result<Vec<f64>, ModelError> {
        if theta.len() != self.theta_dim() {
            return Err(ModelError::DimensionMismatch {
                expected: self.theta_dim(),
                found: theta.len(),
            });
        }
        let alpha = theta[EpidemicScenario::DIM];
        if !(alpha >= 0.0 && alpha <= 1.0) {
            return Err(ModelError::OutOfRange {
                name: "alpha".into(),
                value: alpha,
                lo: 0.0,
                hi: 1.0,
            });
        }
        let sc = EpidemicScenario::from_slice(&theta[..EpidemicScenario::DIM])?;
        let base = RngStream::new(rng.next_word(), 0);
        let set = simulate_replicates(
            &sc,
            0,
            self.inner.population,
            self.inner.weeks,
            self.replicates,
            &base,
            Execution::Sequential,
        )?;
        let weeks = set.weeks();
        let mut column = vec![0.0; set.replicates()];
        Ok((0..weeks)
            .map(|t| {
                for (slot, c) in column.iter_mut().zip(&set.curves) {
                    *slot = c[t];
                }
                column.sort_by(f64::total_cmp);
                quantile_sorted(&column, alpha)
            })
            .collect())
    }
}

/// Scenario design, replicate curves and quantile trajectories for the
/// outbreak benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct EpidemicStudy {
    pub scenarios: Vec<EpidemicScenario>,
    pub probs: Vec<f64>,
    /// `quantiles[s][k][t]`: level `probs[k]` of scenario `s` at week `t`.
    pub quantiles: Vec<Vec<Vec<f64>>>,
}

/// Options for [`run_epidemic_study`].
#[derive(Debug, Clone, PartialEq)]
pub struct EpidemicStudyConfig {
    pub scenarios: usize,
    pub replicates: usize,
    pub population: u64,
    pub weeks: usize,
    pub probs: Vec<f64>,
}

impl Default for EpidemicStudyConfig {
    fn default() -> Self {
        Self {
            scenarios: 100,
            replicates: 100,
            population: EpidemicScenario::DEFAULT_POPULATION,
            weeks: EpidemicScenario::DEFAULT_WEEKS,
            probs: DEFAULT_QUANTILE_PROBS.to_vec(),
        }
    }
}

/// Latin hypercube over the admissible box, `replicates` runs per scenario,
/// reduced to quantile trajectories. Scenario `s` draws from
/// `rng.substream(s)`; the design itself from `rng.substream(u64::MAX)`.
pub fn run_epidemic_study(
    cfg: &EpidemicStudyConfig,
    rng: &RngStream,
    execution: Execution,
) -> Result<EpidemicStudy, ModelError> {
    let mut design_rng = rng.substream(u64::MAX);
    let design = crate::numerics::lhs_sample(&EpidemicScenario::RANGES, cfg.scenarios, &mut design_rng)?;
    let scenarios: Vec<EpidemicScenario> = design
        .iter_rows()
        .map(EpidemicScenario::from_slice)
        .collect::<Result<_, _>>()?;
    let quantiles = exec::try_map_indexed(execution, scenarios.len(), |s| {
        let set = simulate_replicates(
            &scenarios[s],
            s,
            cfg.population,
            cfg.weeks,
            cfg.replicates,
            &rng.substream(s as u64),
            Execution::Sequential,
        )?;
        quantile_index_replicates(&set, &cfg.probs).map(|(q, _)| q)
    })?;
    Ok(EpidemicStudy {
        scenarios,
        probs: cfg.probs.clone(),
        quantiles,
    })
}
