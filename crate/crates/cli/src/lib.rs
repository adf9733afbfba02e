//! Experiment harness: configuration, checkpoints and the `gbc` subcommands.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod csv;

use std::path::PathBuf;

pub use checkpoint::{Checkpoint, CheckpointError, Provenance, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{ConfigError, RunConfig};

use gbc_core::analytic::AnalyticError;
use gbc_core::baselines::BaselineError;
use gbc_core::models::ModelError;
use gbc_core::numerics::NumericsError;
use gbc_core::quantile::QuantileError;
use gbc_core::summaries::SummaryError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_ACCEPTANCE: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Checkpoint { path: PathBuf, source: CheckpointError },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Summary(#[from] SummaryError),
    #[error(transparent)]
    Quantile(#[from] QuantileError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error("{0}")]
    Data(String),
    #[error("acceptance check failed: {0}")]
    Acceptance(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Model(ModelError::UnknownSimulator { .. }) => EXIT_CONFIG,
            CliError::Acceptance(_) => EXIT_ACCEPTANCE,
            _ => EXIT_DATA,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Worker-thread count: the flag wins, then `GBC_THREADS`, then the runtime
/// default (0).
pub fn resolve_threads(flag: Option<usize>, env: Option<&str>) -> Result<usize, ConfigError> {
    if let Some(n) = flag {
        return Ok(n);
    }
    match env.map(str::trim).filter(|s| !s.is_empty()) {
        None => Ok(0),
        Some(s) => s.parse().map_err(|_| ConfigError::Invalid {
            section: "env".into(),
            key: "GBC_THREADS".into(),
            msg: format!("'{s}' is not a thread count"),
        }),
    }
}

/// Installs the global worker pool. A no-op without the `parallel` feature
/// or when `threads` is 0.
pub fn init_threads(threads: usize) {
    #[cfg(feature = "parallel")]
    if threads > 0 {
        // A second initialisation (e.g. from tests) keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let _ = threads;
}
