use std::f64::consts::PI;

use super::QuantileError;
use crate::numerics::{Activation, DenseLayer, FeedForwardNet, NumericsError, RngStream};

/// `φⱼ(τ) = max(0, Σᵢ cos(πiτ)·w_ij + b_j)` for `i = 0..n_cos`, `j = 0..m`.
///
/// Stored as a one-layer rectifier network over the cosine basis, so
/// `weights()[j * n_cos + i]` is `w_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct CosineEmbedding {
    net: FeedForwardNet,
}

impl CosineEmbedding {
    pub fn new(n_cos: usize, m: usize, rng: &mut RngStream) -> Result<Self, NumericsError> {
        Ok(Self {
            net: FeedForwardNet::new(&[n_cos, m], &[Activation::Rectifier], rng)?,
        })
    }

    pub fn from_parts(n_cos: usize, m: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self, NumericsError> {
        let layer = DenseLayer::from_parts(n_cos, m, weights, bias, Activation::Rectifier)?;
        Self::from_net(FeedForwardNet::from_layers(vec![layer])?)
    }

    /// Accepts only a single rectifier layer.
    pub fn from_net(net: FeedForwardNet) -> Result<Self, NumericsError> {
        if net.layers().len() != 1 || net.layers()[0].activation() != Activation::Rectifier {
            return Err(NumericsError::InvalidArchitecture(
                "cosine embedding is a single rectifier layer".into(),
            ));
        }
        Ok(Self { net })
    }

    pub fn n_cos(&self) -> usize {
        self.net.input_dim()
    }

    pub fn dim(&self) -> usize {
        self.net.output_dim()
    }

    pub fn weights(&self) -> &[f64] {
        self.net.layers()[0].weights()
    }

    pub fn bias(&self) -> &[f64] {
        self.net.layers()[0].bias()
    }

    pub fn net(&self) -> &FeedForwardNet {
        &self.net
    }

    pub(crate) fn net_mut(&mut self) -> &mut FeedForwardNet {
        &mut self.net
    }

    /// `[cos(πiτ)]ᵢ` written into `out`.
    pub fn basis_into(tau: f64, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = (PI * i as f64 * tau).cos();
        }
    }

    pub fn basis(&self, tau: f64) -> Vec<f64> {
        let mut b = vec![0.0; self.n_cos()];
        Self::basis_into(tau, &mut b);
        b
    }
}

/// Evaluates the embedding at `τ ∈ [0, 1]`.
pub fn cosine_embed(tau: f64, emb: &CosineEmbedding) -> Result<Vec<f64>, QuantileError> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(QuantileError::LevelOutOfRange(tau));
    }
    Ok(emb.net.forward(&emb.basis(tau))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn direct(tau: f64, n: usize, m: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
        (0..m)
            .map(|j| {
                let s: f64 = (0..n).map(|i| (PI * i as f64 * tau).cos() * w[j * n + i]).sum();
                (s + b[j]).max(0.0)
            })
            .collect()
    }

    #[test]
    fn at_zero_every_basis_term_is_one() {
        let emb = CosineEmbedding::new(5, 3, &mut RngStream::new(1, 0)).unwrap();
        let out = cosine_embed(0.0, &emb).unwrap();
        for j in 0..3 {
            let s: f64 = emb.weights()[j * 5..(j + 1) * 5].iter().sum::<f64>() + emb.bias()[j];
            assert!((out[j] - s.max(0.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn single_frequency_is_constant() {
        let emb = CosineEmbedding::from_parts(1, 2, vec![0.7, -0.2], vec![0.1, 0.5]).unwrap();
        let a = cosine_embed(0.0, &emb).unwrap();
        for t in [0.1, 0.5, 0.99, 1.0] {
            assert_eq!(cosine_embed(t, &emb).unwrap(), a);
        }
    }

    #[test]
    fn basis_at_one_alternates() {
        let emb = CosineEmbedding::new(6, 1, &mut RngStream::new(0, 0)).unwrap();
        for (i, v) in emb.basis(1.0).iter().enumerate() {
            let want = if i % 2 == 0 { 1.0 } else { -1.0 };
            assert!((v - want).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_levels_outside_unit_interval() {
        let emb = CosineEmbedding::new(2, 2, &mut RngStream::new(0, 0)).unwrap();
        assert!(cosine_embed(-0.01, &emb).is_err());
        assert!(cosine_embed(1.01, &emb).is_err());
        assert!(cosine_embed(f64::NAN, &emb).is_err());
    }

    #[test]
    fn matches_direct_formula_on_random_inputs() {
        let mut rng = RngStream::new(42, 0);
        for _ in 0..1000 {
            let n = 1 + rng.below(16);
            let m = 1 + rng.below(8);
            let w: Vec<f64> = (0..n * m).map(|_| rng.standard_normal()).collect();
            let b: Vec<f64> = (0..m).map(|_| rng.standard_normal()).collect();
            let tau = rng.uniform();
            let emb = CosineEmbedding::from_parts(n, m, w.clone(), b.clone()).unwrap();
            let got = cosine_embed(tau, &emb).unwrap();
            for (g, d) in got.iter().zip(direct(tau, n, m, &w, &b)) {
                assert!((g - d).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn output_is_non_negative(seed in 0u64..10_000, tau in 0.0f64..=1.0) {
            let emb = CosineEmbedding::new(8, 8, &mut RngStream::new(seed, 0)).unwrap();
            prop_assert!(cosine_embed(tau, &emb).unwrap().iter().all(|&v| v >= 0.0));
        }
    }
}
