use rand_distr::{Distribution, Gamma};

use super::BaselineError;
use crate::exec::{self, Execution};
use crate::numerics::{DenseMatrix, RngStream};

/// A structural equation `y = G(u, θ)` with noise `u` of known law.
pub trait DataGenerator: Send + Sync {
    fn theta_dim(&self) -> usize;
    fn data_dim(&self) -> usize;
    fn draw_noise(&self, rng: &mut RngStream) -> Vec<f64>;
    fn generate(&self, u: &[f64], theta: &[f64]) -> Vec<f64>;
}

/// `Y = θ + U`, `U ~ N(0, 1)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LocationModel;

impl DataGenerator for LocationModel {
    fn theta_dim(&self) -> usize {
        1
    }

    fn data_dim(&self) -> usize {
        1
    }

    fn draw_noise(&self, rng: &mut RngStream) -> Vec<f64> {
        vec![rng.standard_normal()]
    }

    fn generate(&self, u: &[f64], theta: &[f64]) -> Vec<f64> {
        vec![theta[0] + u[0]]
    }
}

/// `Y = θ + scale·U`, `U ~ N(0, 1)`; with `scale = σ/√n` this is the sample
/// mean of n normal observations with known variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledLocationModel {
    pub scale: f64,
}

impl DataGenerator for ScaledLocationModel {
    fn theta_dim(&self) -> usize {
        1
    }

    fn data_dim(&self) -> usize {
        1
    }

    fn draw_noise(&self, rng: &mut RngStream) -> Vec<f64> {
        vec![self.scale * rng.standard_normal()]
    }

    fn generate(&self, u: &[f64], theta: &[f64]) -> Vec<f64> {
        vec![theta[0] + u[0]]
    }
}

/// Sample mean and variance of n normal observations, θ = (μ, σ):
/// `ȳ = μ + σU₁`, `s² = σ²U₂` with `U₁ ~ N(0, 1/n)` and `U₂ ~ Gamma(n/2, rate n/2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalSummaryModel {
    pub n: usize,
}

impl DataGenerator for NormalSummaryModel {
    fn theta_dim(&self) -> usize {
        2
    }

    fn data_dim(&self) -> usize {
        2
    }

    fn draw_noise(&self, rng: &mut RngStream) -> Vec<f64> {
        let n = self.n as f64;
        let gamma = Gamma::new(n / 2.0, 2.0 / n).expect("n >= 1");
        vec![rng.standard_normal() / n.sqrt(), gamma.sample(rng)]
    }

    fn generate(&self, u: &[f64], theta: &[f64]) -> Vec<f64> {
        vec![theta[0] + theta[1] * u[0], theta[1] * theta[1] * u[1]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiducialConfig {
    pub epsilon: f64,
    /// Search interval per θ coordinate.
    pub bounds: Vec<(f64, f64)>,
    /// Divide the residual norm by √(data dimension) before comparing with ε.
    pub per_coordinate: bool,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl FiducialConfig {
    pub fn new(epsilon: f64, bounds: Vec<(f64, f64)>) -> Self {
        Self {
            epsilon,
            bounds,
            per_coordinate: false,
            tolerance: 1e-8,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiducialResult {
    pub draws: DenseMatrix,
    pub attempted: usize,
    pub rejected: usize,
    /// Draws dropped because the inner minimisation did not converge.
    pub nonconverged: usize,
}

/// Minimiser of a unimodal `f` on `[lo, hi]` by golden-section search.
/// Returns `None` if the bracket is not shrunk below `tol·(1 + |x|)` within
/// `max_iter` iterations.
pub fn golden_section(
    mut f: impl FnMut(f64) -> f64,
    lo: f64,
    hi: f64,
    tol: f64,
    max_iter: usize,
) -> Option<f64> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..max_iter {
        let mid = 0.5 * (a + b);
        if (b - a).abs() <= tol * (1.0 + mid.abs()) {
            return Some(mid);
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    None
}

/// Cyclic coordinate descent with golden-section line searches. Converged when
/// a full sweep moves no coordinate by more than `tol·(1 + |θₖ|)`.
pub fn coordinate_descent(
    f: impl Fn(&[f64]) -> f64,
    bounds: &[(f64, f64)],
    tol: f64,
    max_iter: usize,
) -> Option<Vec<f64>> {
    let mut x: Vec<f64> = bounds.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect();
    if x.len() == 1 {
        return golden_section(|v| f(&[v]), bounds[0].0, bounds[0].1, tol, max_iter).map(|v| vec![v]);
    }
    for _ in 0..max_iter {
        let mut moved: f64 = 0.0;
        for k in 0..x.len() {
            let old = x[k];
            let mut probe = x.clone();
            let best = golden_section(
                |v| {
                    probe[k] = v;
                    f(&probe)
                },
                bounds[k].0,
                bounds[k].1,
                tol,
                max_iter,
            )?;
            x[k] = best;
            moved = moved.max((best - old).abs() / (1.0 + old.abs()));
        }
        if moved <= tol {
            return Some(x);
        }
    }
    None
}

fn norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// For each of `budget` noise draws `u*`, solves `θ* = argmin ‖y − G(u*, θ)‖`
/// and keeps `θ*` when `‖y − G(u*, θ*)‖ ≤ ε`. Draw `i` uses `rng.substream(i)`.
pub fn fiducial_rejection(
    g: &dyn DataGenerator,
    y_obs: &[f64],
    cfg: &FiducialConfig,
    budget: usize,
    rng: &RngStream,
    execution: Execution,
) -> Result<FiducialResult, BaselineError> {
    if y_obs.len() != g.data_dim() {
        return Err(BaselineError::InvalidArgument(format!(
            "observation has {} entries, generator produces {}",
            y_obs.len(),
            g.data_dim()
        )));
    }
    if cfg.bounds.len() != g.theta_dim() || cfg.bounds.iter().any(|(lo, hi)| !(lo < hi)) {
        return Err(BaselineError::InvalidArgument(format!(
            "need {} search intervals with lo < hi",
            g.theta_dim()
        )));
    }
    if !(cfg.epsilon >= 0.0) {
        return Err(BaselineError::InvalidArgument("tolerance must be >= 0".into()));
    }
    let norm_scale = if cfg.per_coordinate {
        (g.data_dim() as f64).sqrt()
    } else {
        1.0
    };
    enum Outcome {
        Accepted(Vec<f64>),
        Rejected,
        NotConverged,
    }
    let outcomes = exec::map_indexed(execution, budget, |i| {
        let mut r = rng.substream(i as u64);
        let u = g.draw_noise(&mut r);
        let objective = |theta: &[f64]| norm(y_obs, &g.generate(&u, theta));
        match coordinate_descent(objective, &cfg.bounds, cfg.tolerance, cfg.max_iter) {
            None => Outcome::NotConverged,
            Some(theta) => {
                if objective(&theta) / norm_scale <= cfg.epsilon {
                    Outcome::Accepted(theta)
                } else {
                    Outcome::Rejected
                }
            }
        }
    });
    let d = g.theta_dim();
    let (mut rows, mut rejected, mut nonconverged) = (Vec::new(), 0, 0);
    for o in outcomes {
        match o {
            Outcome::Accepted(t) => rows.extend(t),
            Outcome::Rejected => rejected += 1,
            Outcome::NotConverged => nonconverged += 1,
        }
    }
    Ok(FiducialResult {
        draws: DenseMatrix::from_vec(rows.len() / d, d, rows)?,
        attempted: budget,
        rejected,
        nonconverged,
    })
}
