//! Minibatch optimisation settings shared by the summary and quantile learners.

use crate::numerics::{NumericsError, OptimizerMethod, RngStream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub step_size: f64,
    pub method: OptimizerMethod,
    /// Seeds initialisation, shuffling and quantile-level draws.
    pub seed: u64,
    /// Step size is multiplied by this factor after every epoch.
    pub decay: f64,
    /// Fraction of final epochs over which parameter iterates are averaged;
    /// 0 keeps the last iterate.
    pub average_tail: f64,
    /// Decoupled weight decay: after each step parameters shrink by
    /// `step_size · weight_decay`.
    pub weight_decay: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 128,
            step_size: 1e-3,
            method: OptimizerMethod::adam(),
            seed: 0,
            decay: 1.0,
            average_tail: 0.0,
            weight_decay: 0.0,
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<(), NumericsError> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(NumericsError::InvalidArgument(
                "epochs and batch size must be positive".into(),
            ));
        }
        if !(self.step_size > 0.0) || !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(NumericsError::InvalidArgument(format!(
                "need step_size > 0 and decay in (0, 1], got {} and {}",
                self.step_size, self.decay
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(NumericsError::InvalidArgument(format!(
                "weight_decay must be finite and >= 0, got {}",
                self.weight_decay
            )));
        }
        if !(0.0..=1.0).contains(&self.average_tail) {
            return Err(NumericsError::InvalidArgument(format!(
                "average_tail must lie in [0, 1], got {}",
                self.average_tail
            )));
        }
        Ok(())
    }

    /// First epoch whose iterates enter the average, if averaging is on.
    pub fn average_start(&self) -> Option<usize> {
        if self.average_tail > 0.0 {
            let tail = ((self.epochs as f64 * self.average_tail).ceil() as usize).clamp(1, self.epochs);
            Some(self.epochs - tail)
        } else {
            None
        }
    }
}

/// Running mean of parameter iterates.
#[derive(Debug, Clone, Default)]
pub(crate) struct IterateAverage {
    sums: Vec<Vec<f64>>,
    count: u64,
}

impl IterateAverage {
    pub(crate) fn add(&mut self, blocks: &[&mut [f64]]) {
        if self.sums.is_empty() {
            self.sums = blocks.iter().map(|b| vec![0.0; b.len()]).collect();
        }
        self.count += 1;
        let w = 1.0 / self.count as f64;
        for (s, b) in self.sums.iter_mut().zip(blocks) {
            for (m, v) in s.iter_mut().zip(b.iter()) {
                *m += (v - *m) * w;
            }
        }
    }

    /// Overwrites `blocks` with the average; no-op if nothing was added.
    pub(crate) fn write_into(&self, blocks: &mut [&mut [f64]]) {
        if self.count == 0 {
            return;
        }
        for (s, b) in self.sums.iter().zip(blocks.iter_mut()) {
            b.copy_from_slice(s);
        }
    }
}

/// Multiplies every parameter by `1 − step_size · weight_decay`.
pub(crate) fn apply_weight_decay(blocks: &mut [&mut [f64]], step_size: f64, weight_decay: f64) {
    if weight_decay == 0.0 {
        return;
    }
    let f = 1.0 - step_size * weight_decay;
    for b in blocks.iter_mut() {
        for v in b.iter_mut() {
            *v *= f;
        }
    }
}

/// A fresh permutation of `0..n` cut into consecutive batches.
pub(crate) fn shuffled_batches(n: usize, batch: usize, rng: &mut RngStream) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut idx);
    idx.chunks(batch).map(<[usize]>::to_vec).collect()
}

/// Loss trace plus held-out evaluation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    /// Mean training loss per epoch.
    pub loss_trace: Vec<f64>,
    /// Loss on the held-out rows, if any.
    pub holdout_loss: Option<f64>,
}

impl TrainReport {
    pub fn final_loss(&self) -> f64 {
        self.loss_trace.last().copied().unwrap_or(f64::NAN)
    }
}
