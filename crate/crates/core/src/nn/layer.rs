use rand::distributions::{Distribution, Uniform};
use rand::Rng;

use super::dropout::dropout_forward;
use super::optim::OptimizerState;
use super::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
    /// Row-wise softmax.
    Softmax,
}

impl Activation {
    pub const ALL: [Activation; 5] = [
        Activation::Identity,
        Activation::Relu,
        Activation::Tanh,
        Activation::Sigmoid,
        Activation::Softmax,
    ];

    pub fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
            Activation::Sigmoid => 3,
            Activation::Softmax => 4,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Activation::ALL.into_iter().find(|a| a.tag() == tag)
    }

    /// Applies the activation to pre-activations `z` of shape `[batch, width]`.
    pub fn apply(self, z: &Tensor) -> Tensor {
        match self {
            Activation::Identity => z.clone(),
            Activation::Relu => z.map(|v| v.max(0.0)),
            Activation::Tanh => z.map(f64::tanh),
            Activation::Sigmoid => z.map(sigmoid),
            Activation::Softmax => {
                let mut out = z.clone();
                let c = z.cols();
                for row in out.data_mut().chunks_mut(c) {
                    softmax_in_place(row);
                }
                out
            }
        }
    }

    /// Maps `dL/dy` to `dL/dz` given the cached pre-activation and output.
    pub fn backward(self, z: &Tensor, y: &Tensor, upstream: &Tensor) -> Tensor {
        let mut out = upstream.clone();
        let g = out.data_mut();
        match self {
            Activation::Identity => {}
            Activation::Relu => {
                for (gi, &zi) in g.iter_mut().zip(z.data()) {
                    if zi <= 0.0 {
                        *gi = 0.0;
                    }
                }
            }
            Activation::Tanh => {
                for (gi, &yi) in g.iter_mut().zip(y.data()) {
                    *gi *= 1.0 - yi * yi;
                }
            }
            Activation::Sigmoid => {
                for (gi, &yi) in g.iter_mut().zip(y.data()) {
                    *gi *= yi * (1.0 - yi);
                }
            }
            Activation::Softmax => {
                let c = y.cols();
                for (grow, yrow) in g.chunks_mut(c).zip(y.data().chunks(c)) {
                    let dot: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                    for (gi, &yi) in grow.iter_mut().zip(yrow) {
                        *gi = yi * (*gi - dot);
                    }
                }
            }
        }
        out
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Softmax => "softmax",
        };
        f.write_str(s)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Fully connected layer `y = activation(x · W + b)` with `W` of shape `[in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    weights: Tensor,
    bias: Tensor,
    activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        if weights.shape().len() != 2 || bias.shape() != [weights.shape()[1]] {
            return Err(Error::contract(format!(
                "dense layer weights {:?} and bias {:?} are inconsistent",
                weights.shape(),
                bias.shape()
            )));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(
        inputs: usize,
        outputs: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::usage("dense layer dimensions must be positive"));
        }
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit);
        let w = (0..inputs * outputs).map(|_| dist.sample(rng)).collect();
        Self::new(
            Tensor::new(vec![inputs, outputs], w)?,
            Tensor::zeros(&[outputs]),
            activation,
        )
    }

    pub fn inputs(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut Tensor {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut Tensor {
        &mut self.bias
    }

    /// Pre-activation `x · W + b`.
    pub fn affine(&self, input: &Tensor) -> Result<Tensor> {
        if input.shape().len() != 2 || input.cols() != self.inputs() {
            return Err(Error::contract(format!(
                "dense input shape {:?} does not match layer width {}",
                input.shape(),
                self.inputs()
            )));
        }
        let mut z = input.matmul(&self.weights)?;
        let out = self.outputs();
        for row in z.data_mut().chunks_mut(out) {
            for (v, b) in row.iter_mut().zip(self.bias.data()) {
                *v += b;
            }
        }
        Ok(z)
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        Ok(self.activation.apply(&self.affine(input)?))
    }
}

#[derive(Debug, Clone)]
pub struct LayerGrad {
    pub weights: Tensor,
    pub bias: Tensor,
}

/// Gradients from one backward pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
    /// `dL/dx` with respect to the network input (before any dropout).
    pub input: Tensor,
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Tensor,
    pre: Tensor,
    out: Tensor,
}

#[derive(Debug, Clone)]
struct ForwardCache {
    dropout_mask: Option<Vec<f64>>,
    layers: Vec<LayerCache>,
}

/// A stack of dense layers with optional input dropout.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<DenseLayer>,
    input_dropout: f64,
    cache: Option<ForwardCache>,
}

impl Mlp {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::usage("network needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::contract(format!(
                    "layer widths do not chain: {} -> {}",
                    pair[0].outputs(),
                    pair[1].inputs()
                )));
            }
        }
        Ok(Self {
            layers,
            input_dropout: 0.0,
            cache: None,
        })
    }

    pub fn with_input_dropout(mut self, rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::usage(format!("dropout rate {rate} outside [0, 1)")));
        }
        self.input_dropout = rate;
        Ok(self)
    }

    pub fn input_dropout(&self) -> f64 {
        self.input_dropout
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn into_layers(self) -> Vec<DenseLayer> {
        self.layers
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn outputs(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    /// Inference pass: dropout disabled, nothing cached.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let mut x = input.clone();
        for layer in &self.layers {
            x = layer.forward(&x)?;
        }
        Ok(x)
    }

    /// Training pass: applies dropout and caches activations for [`Mlp::backward`].
    pub fn forward_train<R: Rng + ?Sized>(&mut self, input: &Tensor, rng: &mut R) -> Result<Tensor> {
        let (mut x, mask) = if self.input_dropout > 0.0 {
            let (x, mask) = dropout_forward(input, self.input_dropout, rng, true)?;
            (x, Some(mask))
        } else {
            (input.clone(), None)
        };
        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let pre = layer.affine(&x)?;
            let out = layer.activation.apply(&pre);
            layers.push(LayerCache {
                input: x,
                pre,
                out: out.clone(),
            });
            x = out;
        }
        self.cache = Some(ForwardCache {
            dropout_mask: mask,
            layers,
        });
        Ok(x)
    }

    /// Backpropagates `dL/dy` through the cached forward pass.
    pub fn backward(&self, upstream: &Tensor) -> Result<Gradients> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::contract("backward called without a cached forward pass"))?;
        let last = &cache.layers[cache.layers.len() - 1].out;
        upstream.ensure_same_shape(last, "backward upstream gradient")?;

        let mut grad = upstream.clone();
        let mut grads = Vec::with_capacity(self.layers.len());
        for (layer, lc) in self.layers.iter().zip(&cache.layers).rev() {
            let dz = layer.activation.backward(&lc.pre, &lc.out, &grad);
            let dw = lc.input.t_matmul(&dz)?;
            let mut db = vec![0.0; layer.outputs()];
            for row in dz.data().chunks(layer.outputs()) {
                for (d, v) in db.iter_mut().zip(row) {
                    *d += v;
                }
            }
            grad = dz.matmul_t(&layer.weights)?;
            grads.push(LayerGrad {
                weights: dw,
                bias: Tensor::new(vec![layer.outputs()], db)?,
            });
        }
        grads.reverse();
        if let Some(mask) = &cache.dropout_mask {
            for (g, m) in grad.data_mut().iter_mut().zip(mask) {
                *g *= m;
            }
        }
        Ok(Gradients {
            layers: grads,
            input: grad,
        })
    }

    pub fn apply_gradients(&mut self, grads: &Gradients, opt: &mut MlpOptimizer) -> Result<()> {
        if grads.layers.len() != self.layers.len() || opt.states.len() != 2 * self.layers.len() {
            return Err(Error::contract("gradient/optimizer layer count mismatch"));
        }
        for (i, (layer, g)) in self.layers.iter_mut().zip(&grads.layers).enumerate() {
            opt.states[2 * i].step(&mut layer.weights, &g.weights)?;
            opt.states[2 * i + 1].step(&mut layer.bias, &g.bias)?;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.bias.is_finite())
    }
}

/// One optimizer state per parameter tensor of an [`Mlp`].
#[derive(Debug, Clone)]
pub struct MlpOptimizer {
    states: Vec<OptimizerState>,
}

impl MlpOptimizer {
    pub fn new(net: &Mlp, template: &OptimizerState) -> Self {
        Self {
            states: vec![template.clone(); 2 * net.layers.len()],
        }
    }

    pub fn set_learning_rate(&mut self, learning_rate: f64) -> Result<()> {
        self.states.iter_mut().try_for_each(|s| s.set_learning_rate(learning_rate))
    }
}
