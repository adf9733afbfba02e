use super::NumericsError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerMethod {
    SgdMomentum { momentum: f64 },
    /// Adam with bias correction.
    AdaptiveMoment { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerMethod {
    pub fn adam() -> Self {
        OptimizerMethod::AdaptiveMoment {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn sgd(momentum: f64) -> Self {
        OptimizerMethod::SgdMomentum { momentum }
    }
}

/// First-order optimizer state over a fixed list of parameter blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    method: OptimizerMethod,
    step_size: f64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    steps: u64,
}

impl OptimizerState {
    pub fn new(
        method: OptimizerMethod,
        step_size: f64,
        block_sizes: &[usize],
    ) -> Result<Self, NumericsError> {
        if !(step_size > 0.0 && step_size.is_finite()) {
            return Err(NumericsError::InvalidArgument(format!(
                "step size must be positive, got {step_size}"
            )));
        }
        let zeros = || block_sizes.iter().map(|&n| vec![0.0; n]).collect::<Vec<_>>();
        let second = match method {
            OptimizerMethod::AdaptiveMoment { .. } => zeros(),
            OptimizerMethod::SgdMomentum { .. } => Vec::new(),
        };
        Ok(Self {
            method,
            step_size,
            first: zeros(),
            second,
            steps: 0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    pub fn set_step_size(&mut self, step_size: f64) {
        self.step_size = step_size;
    }

    pub fn method(&self) -> OptimizerMethod {
        self.method
    }

    /// Applies one update. Gradients are validated before any parameter is
    /// touched; a non-finite entry reports its block index.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<(), NumericsError> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(NumericsError::DimensionMismatch {
                expected: self.first.len(),
                found: if params.len() != self.first.len() { params.len() } else { grads.len() },
            });
        }
        for (b, ((p, g), buf)) in params.iter().zip(grads).zip(&self.first).enumerate() {
            if p.len() != buf.len() || g.len() != buf.len() {
                return Err(NumericsError::DimensionMismatch {
                    expected: buf.len(),
                    found: if p.len() != buf.len() { p.len() } else { g.len() },
                });
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(NumericsError::NonFiniteGradient { block: b });
            }
        }
        self.steps += 1;
        let lr = self.step_size;
        match self.method {
            OptimizerMethod::SgdMomentum { momentum } => {
                for ((p, g), vel) in params.iter_mut().zip(grads).zip(self.first.iter_mut()) {
                    for ((pi, &gi), vi) in p.iter_mut().zip(g.iter()).zip(vel.iter_mut()) {
                        *vi = momentum * *vi + gi;
                        *pi -= lr * *vi;
                    }
                }
            }
            OptimizerMethod::AdaptiveMoment { beta1, beta2, eps } => {
                let t = self.steps as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(self.first.iter_mut())
                    .zip(self.second.iter_mut())
                {
                    for (((pi, &gi), mi), vi) in
                        p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut())
                    {
                        *mi = beta1 * *mi + (1.0 - beta1) * gi;
                        *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                        let mhat = *mi / c1;
                        let vhat = *vi / c2;
                        *pi -= lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_sgd_definition() {
        let mut opt = OptimizerState::new(OptimizerMethod::sgd(0.0), 0.1, &[1]).unwrap();
        let mut p = [1.0];
        opt.step(&mut [&mut p], &[&[2.0]]).unwrap();
        assert!((p[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_params_and_counts_step() {
        for method in [OptimizerMethod::sgd(0.9), OptimizerMethod::adam()] {
            let mut opt = OptimizerState::new(method, 0.1, &[2]).unwrap();
            let mut p = [1.0, -2.0];
            opt.step(&mut [&mut p], &[&[0.0, 0.0]]).unwrap();
            assert_eq!(p, [1.0, -2.0]);
            assert_eq!(opt.steps(), 1);
        }
    }

    #[test]
    fn non_finite_gradient_names_block() {
        let mut opt = OptimizerState::new(OptimizerMethod::adam(), 0.1, &[1, 2]).unwrap();
        let (mut a, mut b) = ([0.0], [0.0, 0.0]);
        let err = opt
            .step(&mut [&mut a, &mut b], &[&[1.0], &[0.0, f64::NAN]])
            .unwrap_err();
        assert!(matches!(err, NumericsError::NonFiniteGradient { block: 1 }));
        assert_eq!(opt.steps(), 0);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut opt = OptimizerState::new(OptimizerMethod::sgd(0.0), 0.1, &[2]).unwrap();
        let mut p = [0.0];
        assert!(opt.step(&mut [&mut p], &[&[0.0]]).is_err());
    }

    #[test]
    fn adam_converges_on_quadratic_bowl() {
        // f(p) = Σ cᵢ (pᵢ - aᵢ)², minimum at a.
        let target = [3.0, -1.5, 0.25];
        let curv = [1.0, 10.0, 0.1];
        let mut p = [0.0; 3];
        let mut opt = OptimizerState::new(OptimizerMethod::adam(), 0.05, &[3]).unwrap();
        let mut steps = 0;
        while steps < 5000 {
            let g: Vec<f64> = (0..3).map(|i| 2.0 * curv[i] * (p[i] - target[i])).collect();
            opt.step(&mut [&mut p], &[&g]).unwrap();
            steps += 1;
            if p.iter().zip(&target).all(|(a, b)| (a - b).abs() < 1e-3) {
                break;
            }
        }
        assert!(steps < 5000, "did not converge: {p:?}");
    }
}
