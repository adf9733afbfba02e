//! Dense linear algebra, feed-forward networks, optimizers, random streams
//! and space-filling designs.

mod lhs;
mod matrix;
mod net;
mod optim;
mod rng;

pub use lhs::{lhs_sample, stratum_of};
pub use matrix::{dot, DenseMatrix};
pub use net::{Activation, DenseLayer, FeedForwardNet, ForwardTrace, NetGradients};
pub use optim::{OptimizerMethod, OptimizerState};
pub use rng::RngStream;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value in {what}")]
    NonFinite { what: String },
    #[error("non-finite gradient in parameter block {block}")]
    NonFiniteGradient { block: usize },
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Result of comparing reverse-mode gradients with central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameters whose ±h perturbation flipped a rectifier, where a finite
    /// difference does not estimate the derivative.
    pub skipped_kinks: usize,
}

/// Denominator floor for the relative error. Below this magnitude the
/// comparison is effectively absolute, which keeps f64 round-off in the
/// difference quotient (≈ ε·|f|/h) from dominating exactly-zero gradients.
pub const GRADCHECK_FLOOR: f64 = 1e-6;

/// Checks `net.backward` against central finite differences of
/// `⟨out_grad, net.forward(x)⟩` for every parameter.
pub fn gradcheck(
    net: &FeedForwardNet,
    x: &[f64],
    out_grad: &[f64],
    h: f64,
) -> Result<GradCheckReport, NumericsError> {
    let analytic = net.backward(x, out_grad)?;
    let pattern = |n: &FeedForwardNet| -> Result<Vec<bool>, NumericsError> {
        let mut t = ForwardTrace::default();
        n.forward_trace(x, &mut t)?;
        Ok(t.pre_activations().iter().flatten().map(|&z| z > 0.0).collect())
    };
    let objective = |n: &FeedForwardNet| -> Result<f64, NumericsError> {
        Ok(dot(&n.forward(x)?, out_grad))
    };
    let base_pattern = pattern(net)?;
    let mut probe = net.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped_kinks: 0,
    };
    let grads = analytic.blocks();
    for (b, g) in grads.iter().enumerate() {
        for k in 0..g.len() {
            let orig = probe.param_blocks()[b][k];
            probe.param_blocks_mut()[b][k] = orig + h;
            let (fp, pp) = (objective(&probe)?, pattern(&probe)?);
            probe.param_blocks_mut()[b][k] = orig - h;
            let (fm, pm) = (objective(&probe)?, pattern(&probe)?);
            probe.param_blocks_mut()[b][k] = orig;
            if pp != base_pattern || pm != base_pattern {
                report.skipped_kinks += 1;
                continue;
            }
            let fd = (fp - fm) / (2.0 * h);
            let a = g[k];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(GRADCHECK_FLOOR);
            report.max_rel_error = report.max_rel_error.max(rel);
            report.checked += 1;
        }
    }
    Ok(report)
}
