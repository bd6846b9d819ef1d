//! Dense ReLU feed-forward networks with hand-written reverse-mode gradients.
//!
//! A network is `g = g⁽ᴸ⁾ ∘ … ∘ g⁽¹⁾` where every hidden layer computes
//! `relu(Aᵀx + b)` and the output layer is affine. Weight matrices are stored
//! input-major (`H⁽ℓ⁻¹⁾ × H⁽ℓ⁾`), so column count equals bias length.
//!
//! Parameters flatten layer by layer as `[weights (row-major), bias]`; the same
//! layout is used for gradients, trainability masks and optimizer state.

mod matrix;

pub use matrix::{axpy, dot, squared_norm, Matrix};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Elementwise `max(0, x)`.
pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    weights: Matrix,
    bias: Vec<f64>,
    relu: bool,
    /// Per-weight trainability (row-major, same shape as `weights`). Masked-out
    /// weights are fixed constants, which gives partially connected layers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask: Option<Vec<bool>>,
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>, relu: bool) -> Result<Self> {
        if weights.cols() != bias.len() {
            return Err(Error::shape("layer bias", weights.cols(), bias.len()));
        }
        if !weights.is_finite() || bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::config("layer parameters must be finite"));
        }
        Ok(Self {
            weights,
            bias,
            relu,
            mask: None,
        })
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.weights.as_slice().len() {
            return Err(Error::shape("weight mask", self.weights.as_slice().len(), mask.len()));
        }
        self.mask = Some(mask);
        Ok(self)
    }

    pub fn input_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn has_activation(&self) -> bool {
        self.relu
    }

    pub fn num_params(&self) -> usize {
        self.weights.as_slice().len() + self.bias.len()
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.weights.vec_mul(x);
        for (o, b) in out.iter_mut().zip(&self.bias) {
            *o += b;
            if self.relu && *o < 0.0 {
                *o = 0.0;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedForwardNet {
    layers: Vec<DenseLayer>,
}

/// Post-activation outputs of every layer; `outputs[0]` is the network input.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    outputs: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.outputs.last().expect("cache holds at least the input")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// Gradients of `upstreamᵀ·g(x)` with respect to every parameter and the input.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientTape {
    pub layers: Vec<LayerGradient>,
    pub input: Vec<f64>,
}

impl GradientTape {
    /// Parameter gradients in the network's flat parameter layout.
    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::new();
        for layer in &self.layers {
            flat.extend_from_slice(layer.weights.as_slice());
            flat.extend_from_slice(&layer.bias);
        }
        flat
    }
}

impl FeedForwardNet {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty("feed-forward network needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::shape(
                    "layer chaining",
                    pair[0].output_dim(),
                    pair[1].input_dim(),
                ));
            }
        }
        Ok(Self { layers })
    }

    /// He-initialized network over `widths = [H⁽⁰⁾, …, H⁽ᴸ⁾]`, ReLU on every layer
    /// but the last, zero biases.
    pub fn random<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::config("network widths need input and output sizes"));
        }
        if widths.contains(&0) {
            return Err(Error::config("network widths must be positive"));
        }
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let gain = if l == last { 1.0 } else { 2.0 };
                let normal = Normal::new(0.0, (gain / w[0] as f64).sqrt()).expect("finite std");
                let weights = Matrix::from_fn(w[0], w[1], |_, _| normal.sample(rng));
                DenseLayer::new(weights, vec![0.0; w[1]], l != last)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    /// `[H⁽⁰⁾, …, H⁽ᴸ⁾]`
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(DenseLayer::output_dim))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(DenseLayer::num_params).sum()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut h = self.layers[0].forward(x);
        for layer in &self.layers[1..] {
            h = layer.forward(&h);
        }
        Ok(h)
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<ForwardCache> {
        self.check_input(x)?;
        let mut outputs = Vec::with_capacity(self.layers.len() + 1);
        outputs.push(x.to_vec());
        for layer in &self.layers {
            let next = layer.forward(outputs.last().expect("nonempty"));
            outputs.push(next);
        }
        Ok(ForwardCache { outputs })
    }

    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<GradientTape> {
        let cache = self.forward_cached(x)?;
        let mut flat = vec![0.0; self.num_params()];
        let mut input = vec![0.0; self.input_dim()];
        self.backward_cached(&cache, upstream, &mut flat, &mut input)?;

        let mut offset = 0;
        let layers = self
            .layers
            .iter()
            .map(|layer| {
                let nw = layer.weights.as_slice().len();
                let weights = Matrix::from_vec(
                    layer.input_dim(),
                    layer.output_dim(),
                    flat[offset..offset + nw].to_vec(),
                )
                .expect("gradient shape mirrors weights");
                offset += nw;
                let bias = flat[offset..offset + layer.output_dim()].to_vec();
                offset += layer.output_dim();
                LayerGradient { weights, bias }
            })
            .collect();
        Ok(GradientTape { layers, input })
    }

    /// Accumulates (adds) parameter gradients into `param_grad` (flat layout) and
    /// the input gradient into `input_grad`.
    pub fn backward_cached(
        &self,
        cache: &ForwardCache,
        upstream: &[f64],
        param_grad: &mut [f64],
        input_grad: &mut [f64],
    ) -> Result<()> {
        if upstream.len() != self.output_dim() {
            return Err(Error::shape("upstream gradient", self.output_dim(), upstream.len()));
        }
        if param_grad.len() != self.num_params() {
            return Err(Error::shape("parameter gradient", self.num_params(), param_grad.len()));
        }
        if input_grad.len() != self.input_dim() {
            return Err(Error::shape("input gradient", self.input_dim(), input_grad.len()));
        }
        if cache.outputs.len() != self.layers.len() + 1 {
            return Err(Error::shape(
                "forward cache",
                self.layers.len() + 1,
                cache.outputs.len(),
            ));
        }

        let mut delta = upstream.to_vec();
        let mut end = param_grad.len();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            if layer.relu {
                // subgradient of relu at 0 is 0
                for (d, &out) in delta.iter_mut().zip(&cache.outputs[l + 1]) {
                    if out <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let nb = layer.output_dim();
            let nw = layer.weights.as_slice().len();
            let start = end - nb - nw;
            let (w_grad, b_grad) = param_grad[start..end].split_at_mut(nw);
            axpy(1.0, &delta, b_grad);
            let input = &cache.outputs[l];
            let cols = layer.output_dim();
            for (i, &xi) in input.iter().enumerate() {
                if xi != 0.0 {
                    axpy(xi, &delta, &mut w_grad[i * cols..(i + 1) * cols]);
                }
            }
            delta = layer.weights.mul_vec(&delta);
            end = start;
        }
        axpy(1.0, &delta, input_grad);
        Ok(())
    }

    pub fn parameters(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.num_params());
        for layer in &self.layers {
            flat.extend_from_slice(layer.weights.as_slice());
            flat.extend_from_slice(&layer.bias);
        }
        flat
    }

    pub fn set_parameters(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::shape("network parameters", self.num_params(), flat.len()));
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            let nw = layer.weights.as_slice().len();
            layer.weights.as_mut_slice().copy_from_slice(&flat[offset..offset + nw]);
            offset += nw;
            let nb = layer.bias.len();
            layer.bias.copy_from_slice(&flat[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }

    /// Flat trainability mask; biases are always trainable.
    pub fn trainable_mask(&self) -> Vec<bool> {
        let mut mask = Vec::with_capacity(self.num_params());
        for layer in &self.layers {
            match &layer.mask {
                Some(m) => mask.extend_from_slice(m),
                None => mask.extend(std::iter::repeat_n(true, layer.weights.as_slice().len())),
            }
            mask.extend(std::iter::repeat_n(true, layer.bias.len()));
        }
        mask
    }

    /// Parameter count of each layer (weights plus biases).
    pub fn layer_param_counts(&self) -> Vec<usize> {
        self.layers.iter().map(DenseLayer::num_params).collect()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::shape("network input", self.input_dim(), x.len()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn linear(weights: Matrix, relu: bool) -> DenseLayer {
        let n = weights.cols();
        DenseLayer::new(weights, vec![0.0; n], relu).unwrap()
    }

    #[test]
    fn relu_examples() {
        assert_eq!(relu(&[-1.0, 0.0, 2.0]), vec![0.0, 0.0, 2.0]);
        assert_eq!(relu(&[0.0, 0.0]), vec![0.0, 0.0]);
        assert_eq!(relu(&[3.5]), vec![3.5]);
    }

    #[test]
    fn identity_net_passes_input_through() {
        let net = FeedForwardNet::new(vec![linear(Matrix::identity(2), false)]).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0]).unwrap(), vec![1.0, -2.0]);
    }

    #[test]
    fn relu_then_sum() {
        let sum = Matrix::from_vec(2, 1, vec![1.0, 1.0]).unwrap();
        let net = FeedForwardNet::new(vec![linear(Matrix::identity(2), true), linear(sum, false)]).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn input_shape_is_checked() {
        let net = FeedForwardNet::new(vec![linear(Matrix::identity(2), false)]).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Shape { .. })));
        assert!(matches!(net.backward(&[1.0, 2.0], &[1.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn layers_must_chain() {
        let a = linear(Matrix::zeros(2, 3), true);
        let b = linear(Matrix::zeros(2, 1), false);
        assert!(FeedForwardNet::new(vec![a, b]).is_err());
        assert!(FeedForwardNet::new(vec![]).is_err());
        assert!(DenseLayer::new(Matrix::zeros(2, 3), vec![0.0; 2], false).is_err());
    }

    #[test]
    fn scalar_chain_rule() {
        let w = 3.0;
        let layer = DenseLayer::new(Matrix::from_vec(1, 1, vec![w]).unwrap(), vec![0.5], false).unwrap();
        let net = FeedForwardNet::new(vec![layer]).unwrap();
        let tape = net.backward(&[2.0], &[1.0]).unwrap();
        assert_eq!(tape.layers[0].weights.as_slice(), &[2.0]);
        assert_eq!(tape.layers[0].bias, vec![1.0]);
        assert_eq!(tape.input, vec![w]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = FeedForwardNet::random(&[5, 7, 3], &mut rng).unwrap();
        let tape = net.backward(&[0.3, -1.0, 2.0, 0.1, 0.0], &[0.0; 3]).unwrap();
        assert!(tape.flatten().iter().all(|&g| g == 0.0));
        assert!(tape.input.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        // pre-activation is exactly 0 for the hidden unit
        let hidden = DenseLayer::new(Matrix::from_vec(1, 1, vec![1.0]).unwrap(), vec![0.0], true).unwrap();
        let out = linear(Matrix::from_vec(1, 1, vec![1.0]).unwrap(), false);
        let net = FeedForwardNet::new(vec![hidden, out]).unwrap();
        let tape = net.backward(&[0.0], &[1.0]).unwrap();
        assert_eq!(tape.layers[0].weights.as_slice(), &[0.0]);
        assert_eq!(tape.layers[0].bias, vec![0.0]);
        assert_eq!(tape.input, vec![0.0]);
    }

    #[test]
    fn parameters_round_trip_and_mask_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut net = FeedForwardNet::random(&[3, 4, 1], &mut rng).unwrap();
        let p = net.parameters();
        assert_eq!(p.len(), net.num_params());
        assert_eq!(net.layer_param_counts(), vec![16, 5]);
        let shifted: Vec<f64> = p.iter().map(|v| v + 1.0).collect();
        net.set_parameters(&shifted).unwrap();
        assert_eq!(net.parameters(), shifted);
        assert!(net.set_parameters(&p[1..]).is_err());
        assert!(net.trainable_mask().iter().all(|&m| m));
    }
}
