//! Dense feed-forward networks with exact reverse-mode gradients.
//!
//! Weights are stored row-major with shape `(out_dim, in_dim)`. The training
//! hot path uses [`ForwardTrace`] and [`NetGradients`] as reusable buffers;
//! [`FeedForwardNet::forward`] and [`FeedForwardNet::backward`] are the
//! allocating convenience forms.

use super::{NumericsError, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Rectifier,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Rectifier => z.max(0.0),
            Activation::Identity => z,
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Rectifier => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Activation::Rectifier => 1,
            Activation::Identity => 0,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Rectifier),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    in_dim: usize,
    out_dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    activation: Activation,
}

impl DenseLayer {
    pub fn from_parts(
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self, NumericsError> {
        if weights.len() != in_dim * out_dim {
            return Err(NumericsError::DimensionMismatch {
                expected: in_dim * out_dim,
                found: weights.len(),
            });
        }
        if bias.len() != out_dim {
            return Err(NumericsError::DimensionMismatch {
                expected: out_dim,
                found: bias.len(),
            });
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(NumericsError::NonFinite {
                what: "layer parameters".into(),
            });
        }
        Ok(Self {
            in_dim,
            out_dim,
            weights,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    #[inline]
    fn affine_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.in_dim).zip(&self.bias))
        {
            *o = b + super::dot(row, x);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedForwardNet {
    layers: Vec<DenseLayer>,
}

/// Per-layer pre-activations and outputs from one forward pass.
#[derive(Debug, Clone, Default)]
pub struct ForwardTrace {
    input: Vec<f64>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.post.last().map_or(&self.input, Vec::as_slice)
    }

    /// Pre-activation values per layer.
    pub fn pre_activations(&self) -> &[Vec<f64>] {
        &self.pre
    }
}

/// Parameter gradients (accumulating) plus the gradient w.r.t. the input.
#[derive(Debug, Clone, PartialEq)]
pub struct NetGradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub input: Vec<f64>,
    // scratch for the backward sweep
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl NetGradients {
    pub fn zero(&mut self) {
        for w in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            w.iter_mut().for_each(|v| *v = 0.0);
        }
        self.input.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Flat views in the same order as [`FeedForwardNet::param_blocks_mut`].
    pub fn blocks(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }

    pub fn scale(&mut self, factor: f64) {
        for w in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            w.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

impl FeedForwardNet {
    /// He-initialised weights and biases uniform on `±1/√fan_in`, for the
    /// given layer widths (`dims[0]` is the input dimension) and one activation
    /// per layer.
    pub fn new(
        dims: &[usize],
        activations: &[Activation],
        rng: &mut RngStream,
    ) -> Result<Self, NumericsError> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return Err(NumericsError::InvalidArchitecture(format!(
                "{} layer widths need {} activations, got {}",
                dims.len(),
                dims.len().saturating_sub(1),
                activations.len()
            )));
        }
        if dims.contains(&0) {
            return Err(NumericsError::InvalidArchitecture("zero-width layer".into()));
        }
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(w, &act)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let scale = (2.0 / fan_in as f64).sqrt();
                let weights = (0..fan_in * fan_out)
                    .map(|_| rng.standard_normal() * scale)
                    .collect();
                let bound = 1.0 / (fan_in as f64).sqrt();
                let bias = (0..fan_out).map(|_| bound * (2.0 * rng.uniform() - 1.0)).collect();
                DenseLayer {
                    in_dim: fan_in,
                    out_dim: fan_out,
                    weights,
                    bias,
                    activation: act,
                }
            })
            .collect();
        Ok(Self { layers })
    }

    /// Rectifier hidden layers followed by an output layer with `output_act`.
    pub fn mlp(
        input: usize,
        hidden: &[usize],
        output: usize,
        output_act: Activation,
        rng: &mut RngStream,
    ) -> Result<Self, NumericsError> {
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(output);
        let mut acts = vec![Activation::Rectifier; hidden.len()];
        acts.push(output_act);
        Self::new(&dims, &acts, rng)
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self, NumericsError> {
        if layers.is_empty() {
            return Err(NumericsError::InvalidArchitecture("no layers".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(NumericsError::InvalidArchitecture(format!(
                    "layer output {} feeds input {}",
                    pair[0].out_dim, pair[1].in_dim
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(|l| l.out_dim));
        dims
    }

    /// Σ (dᵢ·dᵢ₊₁ + dᵢ₊₁)
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn param_blocks(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn block_names(&self, prefix: &str) -> Vec<String> {
        (0..self.layers.len())
            .flat_map(|i| [format!("{prefix}layer{i}.weight"), format!("{prefix}layer{i}.bias")])
            .collect()
    }

    pub fn gradients(&self) -> NetGradients {
        let max_dim = self.layer_dims().into_iter().max().unwrap_or(0);
        NetGradients {
            weights: self.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: self.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
            input: vec![0.0; self.input_dim()],
            delta: Vec::with_capacity(max_dim),
            delta_prev: Vec::with_capacity(max_dim),
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<(), NumericsError> {
        if x.len() != self.input_dim() {
            return Err(NumericsError::DimensionMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NumericsError> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers {
            next.resize(layer.out_dim, 0.0);
            layer.affine_into(&cur, &mut next);
            next.iter_mut().for_each(|v| *v = layer.activation.apply(*v));
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Forward pass recording everything the backward sweep needs.
    pub fn forward_trace(&self, x: &[f64], trace: &mut ForwardTrace) -> Result<(), NumericsError> {
        self.check_input(x)?;
        let n = self.layers.len();
        trace.input.clear();
        trace.input.extend_from_slice(x);
        trace.pre.resize_with(n, Vec::new);
        trace.post.resize_with(n, Vec::new);
        for (i, layer) in self.layers.iter().enumerate() {
            let (before, rest) = trace.post.split_at_mut(i);
            let input = if i == 0 { &trace.input } else { &before[i - 1] };
            let pre = &mut trace.pre[i];
            pre.resize(layer.out_dim, 0.0);
            layer.affine_into(input, pre);
            let post = &mut rest[0];
            post.clear();
            post.extend(pre.iter().map(|&z| layer.activation.apply(z)));
        }
        Ok(())
    }

    /// Accumulates the gradient of `⟨out_grad, forward(x)⟩` into `grads`
    /// and overwrites `grads.input`.
    pub fn backward_trace(
        &self,
        trace: &ForwardTrace,
        out_grad: &[f64],
        grads: &mut NetGradients,
    ) -> Result<(), NumericsError> {
        if out_grad.len() != self.output_dim() {
            return Err(NumericsError::DimensionMismatch {
                expected: self.output_dim(),
                found: out_grad.len(),
            });
        }
        if trace.pre.len() != self.layers.len() {
            return Err(NumericsError::InvalidArchitecture(
                "trace does not belong to this network".into(),
            ));
        }
        let mut delta = std::mem::take(&mut grads.delta);
        let mut delta_prev = std::mem::take(&mut grads.delta_prev);
        delta.clear();
        delta.extend_from_slice(out_grad);
        for (i, layer) in self.layers.iter().enumerate().rev() {
            for (d, &z) in delta.iter_mut().zip(&trace.pre[i]) {
                *d *= layer.activation.derivative(z);
            }
            let input = if i == 0 { &trace.input } else { &trace.post[i - 1] };
            let gw = &mut grads.weights[i];
            let gb = &mut grads.biases[i];
            delta_prev.clear();
            delta_prev.resize(layer.in_dim, 0.0);
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                let row = o * layer.in_dim;
                for (k, &xk) in input.iter().enumerate() {
                    gw[row + k] += d * xk;
                }
                for (dp, &w) in delta_prev.iter_mut().zip(&layer.weights[row..row + layer.in_dim]) {
                    *dp += d * w;
                }
            }
            std::mem::swap(&mut delta, &mut delta_prev);
        }
        grads.input.clear();
        grads.input.extend_from_slice(&delta);
        grads.delta = delta;
        grads.delta_prev = delta_prev;
        Ok(())
    }

    /// Exact reverse-mode gradient of `⟨out_grad, forward(x)⟩` with respect to
    /// every parameter and the input.
    pub fn backward(&self, x: &[f64], out_grad: &[f64]) -> Result<NetGradients, NumericsError> {
        let mut trace = ForwardTrace::default();
        self.forward_trace(x, &mut trace)?;
        let mut grads = self.gradients();
        self.backward_trace(&trace, out_grad, &mut grads)?;
        Ok(grads)
    }
}
