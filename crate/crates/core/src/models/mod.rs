//! Priors, forward simulators and reference tables.

mod epidemic;
mod prior;
mod simulators;
mod table;

pub use epidemic::{
    quantile_index_replicates, run_epidemic_study, simulate_epidemic, simulate_replicates,
    EpidemicScenario, EpidemicSimulator, EpidemicStudy, EpidemicStudyConfig,
    QuantileTrajectorySimulator, RangeCheck, TrajectorySet, CONTACT_FACTOR,
    DEFAULT_QUANTILE_PROBS, INFECTIOUS_EXIT, LATENT_EXIT, MAX_TRAVEL_REDUCTION,
};
pub use prior::{PriorDist, PriorSpec};
pub use simulators::{
    build_simulator, simulate_normal_normal, CoinFlipSimulator, FnSimulator, NoiseSimulator,
    NormalNormalSimulator, ReplicateSimulator, Simulator, SimulatorParams, REGISTERED_SIMULATORS,
};
pub use table::{
    generate_reference_table, simulate_design, ReferenceTable, TableFormat, TABLE_MAGIC,
    TABLE_VERSION,
};

use thiserror::Error;

use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error("{name} = {value} outside [{lo}, {hi}]")]
    OutOfRange { name: String, value: f64, lo: f64, hi: f64 },
    #[error("replicate set is empty")]
    EmptyReplicates,
    #[error("unknown simulator '{name}' (registered: {registered})")]
    UnknownSimulator { name: String, registered: String },
    #[error("simulator failed at row {row}: {source}")]
    SimulatorFailed {
        row: usize,
        #[source]
        source: Box<ModelError>,
    },
    #[error("simulator produced a non-finite value at row {row}")]
    NonFiniteOutput { row: usize },
    #[error("malformed table at line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
