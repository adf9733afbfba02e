//! Summary statistics `S(y)`: closed-form linear least squares and a learned
//! posterior-mean network.

use thiserror::Error;

use crate::models::ReferenceTable;
use crate::numerics::{
    Activation, DenseMatrix, FeedForwardNet, ForwardTrace, NumericsError, OptimizerState, RngStream,
};
use crate::stats::Standardizer;
use crate::train::{apply_weight_decay, shuffled_batches, IterateAverage, TrainOptions, TrainReport};

/// Ridge added to the normal equations of the linear summary.
pub const LINEAR_RIDGE: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum SummaryError {
    #[error("reference table is empty")]
    EmptyTable,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("design matrix is rank deficient (pivot {pivot}); use a positive ridge")]
    RankDeficient { pivot: usize },
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Elementwise preprocessing of raw observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum YTransform {
    #[default]
    Identity,
    /// `ln(1 + y)`, for counts.
    Log1p,
}

impl YTransform {
    pub fn apply(self, y: &[f64]) -> Vec<f64> {
        match self {
            YTransform::Identity => y.to_vec(),
            YTransform::Log1p => y.iter().map(|v| v.ln_1p()).collect(),
        }
    }

    pub fn code(self) -> u8 {
        match self {
            YTransform::Identity => 0,
            YTransform::Log1p => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(YTransform::Identity),
            1 => Some(YTransform::Log1p),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            YTransform::Identity => "identity",
            YTransform::Log1p => "log1p",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "identity" => Some(YTransform::Identity),
            "log1p" => Some(YTransform::Log1p),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SummaryKind {
    /// `S(y) = B y + c` with `B` of shape k × n.
    Linear { b: DenseMatrix, intercept: Vec<f64> },
    /// `S(y) = out⁻¹(ψ(in(y)))`.
    Network {
        net: FeedForwardNet,
        input: Standardizer,
        output: Standardizer,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryMap {
    pub transform: YTransform,
    pub kind: SummaryKind,
}

impl SummaryMap {
    pub fn linear(b: DenseMatrix, intercept: Vec<f64>) -> Result<Self, SummaryError> {
        if intercept.len() != b.rows() {
            return Err(SummaryError::DimensionMismatch {
                expected: b.rows(),
                found: intercept.len(),
            });
        }
        Ok(Self {
            transform: YTransform::Identity,
            kind: SummaryKind::Linear { b, intercept },
        })
    }

    pub fn identity(n: usize) -> Self {
        Self::linear(DenseMatrix::identity(n), vec![0.0; n]).expect("square identity")
    }

    pub fn with_transform(mut self, transform: YTransform) -> Self {
        self.transform = transform;
        self
    }

    pub fn input_dim(&self) -> usize {
        match &self.kind {
            SummaryKind::Linear { b, .. } => b.cols(),
            SummaryKind::Network { net, .. } => net.input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match &self.kind {
            SummaryKind::Linear { b, .. } => b.rows(),
            SummaryKind::Network { net, .. } => net.output_dim(),
        }
    }

    /// Evaluates `S(y)`.
    pub fn apply(&self, y: &[f64]) -> Result<Vec<f64>, SummaryError> {
        if y.len() != self.input_dim() {
            return Err(SummaryError::DimensionMismatch {
                expected: self.input_dim(),
                found: y.len(),
            });
        }
        let y = self.transform.apply(y);
        match &self.kind {
            SummaryKind::Linear { b, intercept } => {
                let mut s = b.mul_vec(&y)?;
                for (v, c) in s.iter_mut().zip(intercept) {
                    *v += c;
                }
                Ok(s)
            }
            SummaryKind::Network { net, input, output } => {
                Ok(output.invert(&net.forward(&input.apply(&y))?))
            }
        }
    }

    /// Summaries of every row of `y`, as a matrix.
    pub fn apply_rows(&self, y: &DenseMatrix) -> Result<DenseMatrix, SummaryError> {
        let k = self.output_dim();
        let mut out = Vec::with_capacity(y.rows() * k);
        for row in y.iter_rows() {
            out.extend(self.apply(row)?);
        }
        Ok(DenseMatrix::from_vec(y.rows(), k, out)?)
    }
}

/// Closed-form least squares of θ on y with the default ridge.
pub fn fit_linear_summary(table: &ReferenceTable) -> Result<SummaryMap, SummaryError> {
    fit_linear_summary_with(table, YTransform::Identity, LINEAR_RIDGE)
}

/// Centred least squares `B = Θcᵀ Yc (YcᵀYc + ridge·I)⁻¹`, intercept
/// `θ̄ − B ȳ`. With `ridge = 0` a (numerically) singular `YcᵀYc` is an error.
pub fn fit_linear_summary_with(
    table: &ReferenceTable,
    transform: YTransform,
    ridge: f64,
) -> Result<SummaryMap, SummaryError> {
    if table.is_empty() {
        return Err(SummaryError::EmptyTable);
    }
    if !(ridge >= 0.0) {
        return Err(NumericsError::InvalidArgument(format!("ridge must be >= 0, got {ridge}")).into());
    }
    let (n, d) = (table.y_dim(), table.theta_dim());
    let rows: Vec<Vec<f64>> = table.y.iter_rows().map(|r| transform.apply(r)).collect();
    let ybar = column_means(rows.iter().map(Vec::as_slice), n);
    let tbar = column_means(table.theta.iter_rows(), d);
    let mut gram = DenseMatrix::zeros(n, n);
    let mut cross = DenseMatrix::zeros(n, d);
    let mut yc = vec![0.0; n];
    for (row, theta) in rows.iter().zip(table.theta.iter_rows()) {
        for (c, (v, m)) in yc.iter_mut().zip(row.iter().zip(&ybar)) {
            *c = v - m;
        }
        for a in 0..n {
            let ya = yc[a];
            if ya == 0.0 {
                continue;
            }
            let g = gram.row_mut(a);
            for b in a..n {
                g[b] += ya * yc[b];
            }
            let cr = cross.row_mut(a);
            for (k, t) in theta.iter().enumerate() {
                cr[k] += ya * (t - tbar[k]);
            }
        }
    }
    let mut max_diag: f64 = 0.0;
    for a in 0..n {
        for b in 0..a {
            let v = gram.get(b, a);
            gram.set(a, b, v);
        }
        max_diag = max_diag.max(gram.get(a, a));
        gram.set(a, a, gram.get(a, a) + ridge);
    }
    if ridge == 0.0 {
        let l = gram
            .cholesky()
            .map_err(|_| SummaryError::RankDeficient { pivot: 0 })?;
        let tol = 1e-12 * max_diag.max(f64::MIN_POSITIVE);
        if let Some(p) = (0..n).find(|&j| l.get(j, j).powi(2) <= tol) {
            return Err(SummaryError::RankDeficient { pivot: p });
        }
    }
    let bt = gram.cholesky_solve(&cross).map_err(|e| match e {
        NumericsError::NotPositiveDefinite { pivot } => SummaryError::RankDeficient { pivot },
        other => other.into(),
    })?;
    let b = bt.transpose();
    let by = b.mul_vec(&ybar)?;
    let intercept = tbar.iter().zip(&by).map(|(t, v)| t - v).collect();
    Ok(SummaryMap::linear(b, intercept)?.with_transform(transform))
}

fn column_means<'a>(rows: impl Iterator<Item = &'a [f64]>, dim: usize) -> Vec<f64> {
    let mut sum = vec![0.0; dim];
    let mut count = 0usize;
    for r in rows {
        count += 1;
        for (s, v) in sum.iter_mut().zip(r) {
            *s += v;
        }
    }
    sum.iter().map(|s| s / count.max(1) as f64).collect()
}

/// Architecture of the posterior-mean network.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryNetSpec {
    pub hidden: Vec<usize>,
    pub transform: YTransform,
}

impl Default for SummaryNetSpec {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            transform: YTransform::Identity,
        }
    }
}

/// Fits `S_ψ` by minimising `(1/N) Σ ‖S_ψ(y⁽ⁱ⁾) − θ⁽ⁱ⁾‖²` on the first 90% of
/// rows; the remaining rows give the held-out loss. Losses are reported in
/// the original θ units.
pub fn fit_posterior_mean_net(
    table: &ReferenceTable,
    spec: &SummaryNetSpec,
    opts: &TrainOptions,
) -> Result<(SummaryMap, TrainReport), SummaryError> {
    opts.validate()?;
    if table.is_empty() {
        return Err(SummaryError::EmptyTable);
    }
    let (train, hold) = table.holdout_split();
    let (n, d) = (table.y_dim(), table.theta_dim());
    let xs: Vec<Vec<f64>> = train.y.iter_rows().map(|r| spec.transform.apply(r)).collect();
    let input = Standardizer::fit(xs.iter().map(Vec::as_slice), n);
    let output = Standardizer::fit(train.theta.iter_rows(), d);
    let xs: Vec<Vec<f64>> = xs.iter().map(|x| input.apply(x)).collect();
    let ts: Vec<Vec<f64>> = train.theta.iter_rows().map(|t| output.apply(t)).collect();

    let mut rng = RngStream::new(opts.seed, 0x5u64);
    let mut net = FeedForwardNet::mlp(n, &spec.hidden, d, Activation::Identity, &mut rng)?;
    let sizes: Vec<usize> = net.param_blocks().iter().map(|b| b.len()).collect();
    let mut opt = OptimizerState::new(opts.method, opts.step_size, &sizes)?;
    let mut grads = net.gradients();
    let mut trace = ForwardTrace::default();
    let mut out_grad = vec![0.0; d];
    let weights: Vec<f64> = output.scale.iter().map(|s| s * s).collect();
    let mut report = TrainReport::default();

    let average_from = opts.average_start();
    let mut average = IterateAverage::default();
    for epoch in 0..opts.epochs {
        let mut total = 0.0;
        let averaging = average_from.is_some_and(|a| epoch >= a);
        for batch in shuffled_batches(xs.len(), opts.batch_size, &mut rng) {
            grads.zero();
            let inv = 1.0 / batch.len() as f64;
            for &i in &batch {
                net.forward_trace(&xs[i], &mut trace)?;
                for (k, g) in out_grad.iter_mut().enumerate() {
                    let e = trace.output()[k] - ts[i][k];
                    total += weights[k] * e * e;
                    *g = 2.0 * e * inv;
                }
                net.backward_trace(&trace, &out_grad, &mut grads)?;
            }
            let g = grads.blocks();
            opt.step(&mut net.param_blocks_mut(), &g)
                .map_err(|_| SummaryError::Diverged { epoch })?;
            apply_weight_decay(&mut net.param_blocks_mut(), opt.step_size(), opts.weight_decay);
            if averaging {
                average.add(&net.param_blocks_mut());
            }
        }
        let loss = total / xs.len() as f64;
        if !loss.is_finite() {
            return Err(SummaryError::Diverged { epoch });
        }
        report.loss_trace.push(loss);
        opt.set_step_size(opt.step_size() * opts.decay);
    }
    average.write_into(&mut net.param_blocks_mut());

    let map = SummaryMap {
        transform: spec.transform,
        kind: SummaryKind::Network { net, input, output },
    };
    if !hold.is_empty() {
        let mut total = 0.0;
        for (y, t) in hold.y.iter_rows().zip(hold.theta.iter_rows()) {
            let s = map.apply(y)?;
            total += s.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        report.holdout_loss = Some(total / hold.len() as f64);
    }
    Ok((map, report))
}
