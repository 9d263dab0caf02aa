//! Dense feedforward networks with hand-written backpropagation.
//!
//! Parameters live in one flat buffer. Each layer owns a contiguous block laid
//! out as its weight matrix (row-major, `output_dim x input_dim`) followed by
//! its bias vector. Gradients, optimizer moments and soft updates all share
//! that layout, so they operate on plain slices.
//!
//! A network whose last layer uses [`Activation::Tanh`] multiplies the Tanh
//! output by `output_scale`, which bounds every output component by
//! `output_scale` in magnitude.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            // max(z, 0) with the subgradient at 0 taken as 0 in `derivative`.
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `y`.
    #[inline]
    fn derivative(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input_dim: usize, output_dim: usize, activation: Activation) -> Self {
        Self {
            input_dim,
            output_dim,
            activation,
        }
    }

    fn param_count(&self) -> usize {
        self.input_dim * self.output_dim + self.output_dim
    }
}

/// Two hidden ReLU layers of `width` units followed by an output layer.
pub fn two_hidden_layers(
    input_dim: usize,
    width: usize,
    output_dim: usize,
    head: Activation,
) -> Vec<LayerSpec> {
    vec![
        LayerSpec::new(input_dim, width, Activation::Relu),
        LayerSpec::new(width, width, Activation::Relu),
        LayerSpec::new(width, output_dim, head),
    ]
}

fn validate_spec(spec: &[LayerSpec]) -> Result<()> {
    if spec.is_empty() {
        return Err(Error::shape("network needs at least one layer"));
    }
    for (k, layer) in spec.iter().enumerate() {
        if layer.input_dim == 0 || layer.output_dim == 0 {
            return Err(Error::shape(format!("layer {k} has a zero dimension")));
        }
    }
    for (k, pair) in spec.windows(2).enumerate() {
        if pair[0].output_dim != pair[1].input_dim {
            return Err(Error::shape(format!(
                "layer {k} outputs {} values but layer {} expects {}",
                pair[0].output_dim,
                k + 1,
                pair[1].input_dim
            )));
        }
    }
    Ok(())
}

/// Gradient of a scalar objective with respect to every network parameter,
/// in the network's flat parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    values: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(net: &MlpNetwork) -> Self {
        Self {
            values: vec![0.0; net.params.len()],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn fill_zero(&mut self) {
        self.values.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|g| *g *= factor);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    layers: Vec<LayerSpec>,
    offsets: Vec<usize>,
    params: Vec<f64>,
    output_scale: f64,
}

impl MlpNetwork {
    /// Builds a network with weights drawn uniformly from
    /// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` and zero biases.
    pub fn new<R: Rng + ?Sized>(spec: &[LayerSpec], output_scale: f64, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(spec, output_scale)?;
        for k in 0..net.layers.len() {
            let layer = net.layers[k];
            let limit = 1.0 / (layer.input_dim as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit)
                .map_err(|e| Error::shape(format!("bad init range: {e}")))?;
            let start = net.offsets[k];
            let n_weights = layer.input_dim * layer.output_dim;
            for w in &mut net.params[start..start + n_weights] {
                *w = dist.sample(rng);
            }
        }
        Ok(net)
    }

    pub fn zeros(spec: &[LayerSpec], output_scale: f64) -> Result<Self> {
        validate_spec(spec)?;
        if !output_scale.is_finite() || output_scale < 0.0 {
            return Err(Error::shape(format!("invalid output scale {output_scale}")));
        }
        let mut offsets = Vec::with_capacity(spec.len());
        let mut total = 0;
        for layer in spec {
            offsets.push(total);
            total += layer.param_count();
        }
        Ok(Self {
            layers: spec.to_vec(),
            offsets,
            params: vec![0.0; total],
            output_scale,
        })
    }

    /// Assembles a network from per-layer row-major weights and biases.
    pub fn from_parts(
        spec: &[LayerSpec],
        output_scale: f64,
        weights: &[Vec<f64>],
        biases: &[Vec<f64>],
    ) -> Result<Self> {
        let mut net = Self::zeros(spec, output_scale)?;
        if weights.len() != spec.len() || biases.len() != spec.len() {
            return Err(Error::shape("one weight matrix and bias vector per layer"));
        }
        for (k, layer) in spec.iter().enumerate() {
            if weights[k].len() != layer.input_dim * layer.output_dim {
                return Err(Error::shape(format!("layer {k} weight count mismatch")));
            }
            if biases[k].len() != layer.output_dim {
                return Err(Error::shape(format!("layer {k} bias count mismatch")));
            }
            net.weights_mut(k).copy_from_slice(&weights[k]);
            net.biases_mut(k).copy_from_slice(&biases[k]);
        }
        Ok(net)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim
    }

    pub fn output_scale(&self) -> f64 {
        self.output_scale
    }

    fn has_scaled_head(&self) -> bool {
        self.layers[self.layers.len() - 1].activation == Activation::Tanh
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// True when `other` has the same layer specs and output scale.
    pub fn same_layout(&self, other: &MlpNetwork) -> bool {
        self.layers == other.layers && self.output_scale == other.output_scale
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        let spec = self.layers[layer];
        let start = self.offsets[layer];
        &self.params[start..start + spec.input_dim * spec.output_dim]
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut [f64] {
        let spec = self.layers[layer];
        let start = self.offsets[layer];
        &mut self.params[start..start + spec.input_dim * spec.output_dim]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        let spec = self.layers[layer];
        let start = self.offsets[layer] + spec.input_dim * spec.output_dim;
        &self.params[start..start + spec.output_dim]
    }

    pub fn biases_mut(&mut self, layer: usize) -> &mut [f64] {
        let spec = self.layers[layer];
        let start = self.offsets[layer] + spec.input_dim * spec.output_dim;
        &mut self.params[start..start + spec.output_dim]
    }

    /// Slice of a gradient buffer covering `layer`'s weights.
    pub fn layer_weight_range(&self, layer: usize) -> std::ops::Range<usize> {
        let spec = self.layers[layer];
        let start = self.offsets[layer];
        start..start + spec.input_dim * spec.output_dim
    }

    pub fn layer_bias_range(&self, layer: usize) -> std::ops::Range<usize> {
        let spec = self.layers[layer];
        let start = self.offsets[layer] + spec.input_dim * spec.output_dim;
        start..start + spec.output_dim
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_batch(input, 1)?.into_output())
    }

    /// Gradient of `upstream . forward(input)` with respect to the parameters
    /// and to the input.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        let cache = self.forward_batch(input, 1)?;
        let mut grads = Gradients::zeros_like(self);
        let input_grad = self.backward_batch(&cache, upstream, Some(&mut grads), true)?;
        Ok((grads, input_grad.unwrap_or_default()))
    }

    /// Forward pass over `batch` row-major inputs, keeping every layer's
    /// activations for a later [`MlpNetwork::backward_batch`].
    pub fn forward_batch(&self, inputs: &[f64], batch: usize) -> Result<ForwardCache> {
        let in_dim = self.input_dim();
        if batch == 0 || inputs.len() != batch * in_dim {
            return Err(Error::shape(format!(
                "expected {batch} x {in_dim} inputs, got {} values",
                inputs.len()
            )));
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(inputs.to_vec());
        for (k, layer) in self.layers.iter().enumerate() {
            let x = &activations[k];
            let mut z = vec![0.0; batch * layer.output_dim];
            let bias = self.biases(k);
            for row in z.chunks_exact_mut(layer.output_dim) {
                row.copy_from_slice(bias);
            }
            // z (batch x out) += x (batch x in) * W^T (in x out)
            gemm(
                batch,
                layer.input_dim,
                layer.output_dim,
                x,
                (layer.input_dim, 1),
                self.weights(k),
                (1, layer.input_dim),
                &mut z,
                1.0,
            );
            for v in &mut z {
                *v = layer.activation.apply(*v);
            }
            activations.push(z);
        }
        let last = &activations[self.layers.len()];
        let output = if self.has_scaled_head() {
            last.iter().map(|t| t * self.output_scale).collect()
        } else {
            last.clone()
        };
        Ok(ForwardCache {
            batch,
            activations,
            output,
        })
    }

    /// Backpropagates `upstream` (batch x output_dim) through a cached forward
    /// pass. Parameter gradients are summed over the batch and accumulated
    /// into `param_grads` when given; the per-row input gradient is returned
    /// when `want_input_grad` is set.
    pub fn backward_batch(
        &self,
        cache: &ForwardCache,
        upstream: &[f64],
        mut param_grads: Option<&mut Gradients>,
        want_input_grad: bool,
    ) -> Result<Option<Vec<f64>>> {
        let batch = cache.batch;
        if cache.activations.len() != self.layers.len() + 1
            || cache.activations[0].len() != batch * self.input_dim()
        {
            return Err(Error::shape("forward cache does not belong to this network"));
        }
        if upstream.len() != batch * self.output_dim() {
            return Err(Error::shape(format!(
                "expected {batch} x {} upstream values, got {}",
                self.output_dim(),
                upstream.len()
            )));
        }
        if let Some(g) = param_grads.as_deref() {
            if g.len() != self.params.len() {
                return Err(Error::shape("gradient buffer layout mismatch"));
            }
        }

        let n_layers = self.layers.len();
        let mut delta: Vec<f64> = upstream.to_vec();
        if self.has_scaled_head() {
            delta.iter_mut().for_each(|d| *d *= self.output_scale);
        }
        for k in (0..n_layers).rev() {
            let layer = self.layers[k];
            let y = &cache.activations[k + 1];
            for (d, &yv) in delta.iter_mut().zip(y) {
                *d *= layer.activation.derivative(yv);
            }
            let x = &cache.activations[k];
            if let Some(grads) = param_grads.as_deref_mut() {
                let w_range = self.layer_weight_range(k);
                let b_range = self.layer_bias_range(k);
                // dW (out x in) += delta^T (out x batch) * x (batch x in)
                gemm(
                    layer.output_dim,
                    batch,
                    layer.input_dim,
                    &delta,
                    (1, layer.output_dim),
                    x,
                    (layer.input_dim, 1),
                    &mut grads.values[w_range],
                    1.0,
                );
                let gb = &mut grads.values[b_range];
                for row in delta.chunks_exact(layer.output_dim) {
                    for (g, d) in gb.iter_mut().zip(row) {
                        *g += d;
                    }
                }
            }
            if k == 0 && !want_input_grad {
                return Ok(None);
            }
            // dx (batch x in) = delta (batch x out) * W (out x in)
            let mut dx = vec![0.0; batch * layer.input_dim];
            gemm(
                batch,
                layer.output_dim,
                layer.input_dim,
                &delta,
                (layer.output_dim, 1),
                self.weights(k),
                (layer.input_dim, 1),
                &mut dx,
                0.0,
            );
            delta = dx;
        }
        Ok(Some(delta))
    }
}

/// Activations recorded by [`MlpNetwork::forward_batch`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    activations: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl ForwardCache {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Row-major `batch x output_dim` network outputs.
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    pub fn into_output(self) -> Vec<f64> {
        self.output
    }
}

/// `c (m x n) = a (m x k) * b (k x n) + beta * c`, with `(row, col)` strides for
/// `a` and `b` and a row-major `c`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (usize, usize),
    b: &[f64],
    b_strides: (usize, usize),
    c: &mut [f64],
    beta: f64,
) {
    assert!(a.len() >= (m - 1) * a_strides.0 + (k - 1) * a_strides.1 + 1);
    assert!(b.len() >= (k - 1) * b_strides.0 + (n - 1) * b_strides.1 + 1);
    assert_eq!(c.len(), m * n);
    // SAFETY: the asserts above keep every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
