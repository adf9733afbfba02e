//! Density-free generative Bayesian computation.

pub mod analytic;
pub mod baselines;
pub mod exec;
pub mod models;
pub mod numerics;
pub mod quantile;
pub mod stats;
pub mod summaries;
pub mod train;
