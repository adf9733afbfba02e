use super::{pinball_loss, ConditionalQuantile, CosineEmbedding, QuantileError};
use crate::models::ReferenceTable;
use crate::numerics::{
    Activation, DenseMatrix, FeedForwardNet, ForwardTrace, NetGradients, OptimizerState, RngStream,
};
use crate::stats::Standardizer;
use crate::summaries::SummaryMap;
use crate::train::{apply_weight_decay, shuffled_batches, IterateAverage, TrainOptions, TrainReport};

/// Layer sizes of an [`ImplicitQuantileNet`].
#[derive(Debug, Clone, PartialEq)]
pub struct IqnSpec {
    pub feature_hidden: Vec<usize>,
    /// Width `m` of the feature and embedding outputs.
    pub embed_dim: usize,
    pub n_cos: usize,
    pub head_hidden: Vec<usize>,
}

impl Default for IqnSpec {
    fn default() -> Self {
        Self {
            feature_hidden: vec![64, 64],
            embed_dim: 64,
            n_cos: 64,
            head_hidden: vec![64, 64],
        }
    }
}

/// `F⁻¹(τ, x) = g(ψ(x) ∘ φ(τ))` on standardized inputs and target.
#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitQuantileNet {
    pub feature: FeedForwardNet,
    pub embedding: CosineEmbedding,
    pub head: FeedForwardNet,
    pub input: Standardizer,
    /// One-dimensional standardization of the target.
    pub target: Standardizer,
}

/// Reusable buffers for one forward/backward pass.
#[derive(Debug, Default)]
struct Workspace {
    basis: Vec<f64>,
    feat: ForwardTrace,
    emb: ForwardTrace,
    head: ForwardTrace,
    prod: Vec<f64>,
    d_feat: Vec<f64>,
    d_emb: Vec<f64>,
}

struct Grads {
    feature: NetGradients,
    embedding: NetGradients,
    head: NetGradients,
}

impl Grads {
    fn zero(&mut self) {
        self.feature.zero();
        self.embedding.zero();
        self.head.zero();
    }

    fn blocks(&self) -> Vec<&[f64]> {
        let mut b = self.feature.blocks();
        b.extend(self.embedding.blocks());
        b.extend(self.head.blocks());
        b
    }
}

impl ImplicitQuantileNet {
    pub fn new(cond_dim: usize, spec: &IqnSpec, rng: &mut RngStream) -> Result<Self, QuantileError> {
        Ok(Self {
            feature: FeedForwardNet::mlp(cond_dim, &spec.feature_hidden, spec.embed_dim, Activation::Identity, rng)?,
            embedding: CosineEmbedding::new(spec.n_cos, spec.embed_dim, rng)?,
            head: FeedForwardNet::mlp(spec.embed_dim, &spec.head_hidden, 1, Activation::Identity, rng)?,
            input: Standardizer::identity(cond_dim),
            target: Standardizer::identity(1),
        })
    }

    /// Checks that the three parts fit together.
    pub fn validate(&self) -> Result<(), QuantileError> {
        let m = self.embedding.dim();
        let ok = self.feature.output_dim() == m
            && self.head.input_dim() == m
            && self.head.output_dim() == 1
            && self.input.dim() == self.feature.input_dim()
            && self.target.dim() == 1;
        if ok {
            Ok(())
        } else {
            Err(QuantileError::InvalidModel("inconsistent quantile network shapes".into()))
        }
    }

    pub fn param_count(&self) -> usize {
        self.feature.param_count() + self.embedding.net().param_count() + self.head.param_count()
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut b = self.feature.param_blocks_mut();
        b.extend(self.embedding.net_mut().param_blocks_mut());
        b.extend(self.head.param_blocks_mut());
        b
    }

    fn grads(&self) -> Grads {
        Grads {
            feature: self.feature.gradients(),
            embedding: self.embedding.net().gradients(),
            head: self.head.gradients(),
        }
    }

    /// Standardized output for standardized input `z`.
    fn forward_std(&self, z: &[f64], tau: f64, ws: &mut Workspace) -> Result<f64, QuantileError> {
        ws.basis.resize(self.embedding.n_cos(), 0.0);
        CosineEmbedding::basis_into(tau, &mut ws.basis);
        self.feature.forward_trace(z, &mut ws.feat)?;
        self.embedding.net().forward_trace(&ws.basis, &mut ws.emb)?;
        ws.prod.clear();
        ws.prod
            .extend(ws.feat.output().iter().zip(ws.emb.output()).map(|(a, b)| a * b));
        self.head.forward_trace(&ws.prod, &mut ws.head)?;
        Ok(ws.head.output()[0])
    }

    fn backward_std(&self, dout: f64, ws: &mut Workspace, g: &mut Grads) -> Result<(), QuantileError> {
        self.head.backward_trace(&ws.head, &[dout], &mut g.head)?;
        let dprod = &g.head.input;
        ws.d_feat.clear();
        ws.d_feat
            .extend(dprod.iter().zip(ws.emb.output()).map(|(d, b)| d * b));
        ws.d_emb.clear();
        ws.d_emb
            .extend(dprod.iter().zip(ws.feat.output()).map(|(d, a)| d * a));
        self.feature.backward_trace(&ws.feat, &ws.d_feat, &mut g.feature)?;
        self.embedding.net().backward_trace(&ws.emb, &ws.d_emb, &mut g.embedding)?;
        Ok(())
    }

    /// Raw network quantile at level `τ` for conditioning vector `x`.
    pub fn eval(&self, x: &[f64], tau: f64) -> Result<f64, QuantileError> {
        if x.len() != self.input.dim() {
            return Err(QuantileError::DimensionMismatch {
                expected: self.input.dim(),
                found: x.len(),
            });
        }
        if !(0.0..=1.0).contains(&tau) {
            return Err(QuantileError::LevelOutOfRange(tau));
        }
        let mut ws = Workspace::default();
        let z = self.input.apply(x);
        let out = self.forward_std(&z, tau, &mut ws)?;
        Ok(out * self.target.scale[0] + self.target.mean[0])
    }

    /// Mean pinball loss over rows at independent levels drawn from `rng`.
    pub fn pinball_on(
        &self,
        features: &DenseMatrix,
        targets: &[f64],
        rng: &mut RngStream,
    ) -> Result<f64, QuantileError> {
        let mut total = 0.0;
        for (x, &t) in features.iter_rows().zip(targets) {
            let tau = rng.uniform_open();
            total += pinball_loss(tau, t - self.eval(x, tau)?);
        }
        Ok(total / targets.len().max(1) as f64)
    }
}

impl ConditionalQuantile for ImplicitQuantileNet {
    fn cond_dim(&self) -> usize {
        self.input.dim()
    }

    fn quantile(&self, x: &[f64], tau: f64) -> Result<f64, QuantileError> {
        self.eval(x, tau)
    }
}

/// Fits an implicit quantile network to `targets[i]` given `features[i]` by
/// minimising the pinball loss at a fresh `τ ~ U(0,1)` per example per epoch.
/// The loss trace is in target units. `stream` separates the random streams of
/// several nets trained with the same seed.
pub fn train_iqn_on(
    features: &DenseMatrix,
    targets: &[f64],
    spec: &IqnSpec,
    opts: &TrainOptions,
    stream: u64,
) -> Result<(ImplicitQuantileNet, TrainReport), QuantileError> {
    opts.validate()?;
    if features.rows() == 0 {
        return Err(QuantileError::EmptyTable);
    }
    if targets.len() != features.rows() {
        return Err(QuantileError::DimensionMismatch {
            expected: features.rows(),
            found: targets.len(),
        });
    }
    let mut rng = RngStream::new(opts.seed, 0x1000 + stream);
    let mut net = ImplicitQuantileNet::new(features.cols(), spec, &mut rng)?;
    net.input = Standardizer::fit(features.iter_rows(), features.cols());
    net.target = Standardizer::fit(targets.iter().map(std::slice::from_ref), 1);
    let zs: Vec<Vec<f64>> = features.iter_rows().map(|x| net.input.apply(x)).collect();
    let ts: Vec<f64> = targets.iter().map(|t| net.target.apply(&[*t])[0]).collect();
    let scale = net.target.scale[0];

    let mut grads = net.grads();
    let sizes: Vec<usize> = grads.blocks().iter().map(|b| b.len()).collect();
    let mut opt = OptimizerState::new(opts.method, opts.step_size, &sizes)?;
    let mut ws = Workspace::default();
    let mut report = TrainReport::default();
    let average_from = opts.average_start();
    let mut average = IterateAverage::default();
    for epoch in 0..opts.epochs {
        let mut total = 0.0;
        let averaging = average_from.is_some_and(|a| epoch >= a);
        for batch in shuffled_batches(zs.len(), opts.batch_size, &mut rng) {
            grads.zero();
            let inv = 1.0 / batch.len() as f64;
            for &i in &batch {
                let tau = rng.uniform_open();
                let out = net.forward_std(&zs[i], tau, &mut ws)?;
                let u = ts[i] - out;
                total += pinball_loss(tau, u);
                // d/d(out) of ρ_τ(t − out)
                let slope = if u < 0.0 { tau - 1.0 } else { tau };
                net.backward_std(-slope * inv, &mut ws, &mut grads)?;
            }
            let g = grads.blocks();
            opt.step(&mut net.blocks_mut(), &g)
                .map_err(|_| QuantileError::Diverged { epoch })?;
            apply_weight_decay(&mut net.blocks_mut(), opt.step_size(), opts.weight_decay);
            if averaging {
                average.add(&net.blocks_mut());
            }
        }
        let loss = scale * total / zs.len() as f64;
        if !loss.is_finite() {
            return Err(QuantileError::Diverged { epoch });
        }
        report.loss_trace.push(loss);
        opt.set_step_size(opt.step_size() * opts.decay);
    }
    average.write_into(&mut net.blocks_mut());
    Ok((net, report))
}

/// Conditioning vectors `[S(y⁽ⁱ⁾), θ⁽ⁱ⁾₁, …, θ⁽ⁱ⁾ₖ₋₁]` for coordinate `k`
/// (zero-based) of every table row.
pub fn conditioning_features(
    table: &ReferenceTable,
    summary: &SummaryMap,
    k: usize,
) -> Result<DenseMatrix, QuantileError> {
    if k >= table.theta_dim() {
        return Err(QuantileError::DimensionMismatch {
            expected: table.theta_dim(),
            found: k + 1,
        });
    }
    let s = summary.apply_rows(&table.y)?;
    let cols = s.cols() + k;
    let mut data = Vec::with_capacity(table.len() * cols);
    for i in 0..table.len() {
        data.extend_from_slice(s.row(i));
        data.extend_from_slice(&table.theta.row(i)[..k]);
    }
    Ok(DenseMatrix::from_vec(table.len(), cols, data)?)
}

/// Trains the quantile network for coordinate `k` of θ on the first 90% of
/// rows; the rest give a held-out pinball loss.
pub fn train_iqn(
    table: &ReferenceTable,
    summary: &SummaryMap,
    k: usize,
    spec: &IqnSpec,
    opts: &TrainOptions,
) -> Result<(ImplicitQuantileNet, TrainReport), QuantileError> {
    if table.is_empty() {
        return Err(QuantileError::EmptyTable);
    }
    let (train, hold) = table.holdout_split();
    let x = conditioning_features(&train, summary, k)?;
    let (net, mut report) = train_iqn_on(&x, &train.theta.column(k), spec, opts, k as u64)?;
    if !hold.is_empty() {
        let xh = conditioning_features(&hold, summary, k)?;
        let mut rng = RngStream::new(opts.seed, 0x2000 + k as u64);
        report.holdout_loss = Some(net.pinball_on(&xh, &hold.theta.column(k), &mut rng)?);
    }
    Ok((net, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck;

    fn tiny_spec() -> IqnSpec {
        IqnSpec {
            feature_hidden: vec![5],
            embed_dim: 4,
            n_cos: 6,
            head_hidden: vec![5],
        }
    }

    #[test]
    fn composite_gradient_matches_finite_differences() {
        let mut rng = RngStream::new(8, 0);
        let net = ImplicitQuantileNet::new(3, &tiny_spec(), &mut rng).unwrap();
        let z = [0.3, -1.2, 0.8];
        let tau = 0.37;
        let mut ws = Workspace::default();
        let mut g = net.grads();
        net.forward_std(&z, tau, &mut ws).unwrap();
        net.backward_std(1.0, &mut ws, &mut g).unwrap();
        let analytic: Vec<f64> = g.blocks().concat();
        let h = 1e-6;
        let mut probe = net.clone();
        let mut idx = 0;
        let mut worst: f64 = 0.0;
        let n_blocks = probe.blocks_mut().len();
        for b in 0..n_blocks {
            let len = probe.blocks_mut()[b].len();
            for k in 0..len {
                let orig = probe.blocks_mut()[b][k];
                probe.blocks_mut()[b][k] = orig + h;
                let fp = probe.forward_std(&z, tau, &mut Workspace::default()).unwrap();
                probe.blocks_mut()[b][k] = orig - h;
                let fm = probe.forward_std(&z, tau, &mut Workspace::default()).unwrap();
                probe.blocks_mut()[b][k] = orig;
                let fd = (fp - fm) / (2.0 * h);
                let a = analytic[idx];
                worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-6));
                idx += 1;
            }
        }
        assert!(worst < 1e-5, "worst relative error {worst}");
        // the pieces agree with the generic single-net checker too
        let r = gradcheck(&net.head, &ws.prod, &[1.0], 1e-6).unwrap();
        assert!(r.max_rel_error < 1e-5);
    }

    #[test]
    fn point_mass_target_is_learned() {
        let mut rng = RngStream::new(1, 0);
        let rows: Vec<Vec<f64>> = (0..500).map(|_| vec![rng.standard_normal()]).collect();
        let x = DenseMatrix::from_rows(&rows).unwrap();
        let t = vec![2.5; 500];
        let opts = TrainOptions {
            epochs: 200,
            batch_size: 32,
            step_size: 1e-2,
            decay: 0.98,
            ..Default::default()
        };
        let (net, report) = train_iqn_on(&x, &t, &tiny_spec(), &opts, 0).unwrap();
        assert!(report.final_loss() < 1e-3, "{:?}", report.loss_trace.last());
        for tau in [0.01, 0.3, 0.5, 0.9, 0.99] {
            let v = net.eval(&[0.4], tau).unwrap();
            assert!((v - 2.5).abs() < 1e-2, "tau {tau}: {v}");
        }
    }

    #[test]
    fn training_is_deterministic() {
        let x = DenseMatrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let t = [0.0, 1.0, 2.0, 3.0];
        let opts = TrainOptions {
            epochs: 3,
            batch_size: 2,
            ..Default::default()
        };
        let a = train_iqn_on(&x, &t, &tiny_spec(), &opts, 0).unwrap();
        let b = train_iqn_on(&x, &t, &tiny_spec(), &opts, 0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn eval_checks_inputs() {
        let net = ImplicitQuantileNet::new(2, &tiny_spec(), &mut RngStream::new(0, 0)).unwrap();
        assert!(net.eval(&[0.0], 0.5).is_err());
        assert!(net.eval(&[0.0, 0.0], 1.5).is_err());
        assert!(net.validate().is_ok());
    }
}
