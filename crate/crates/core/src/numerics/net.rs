use serde::{Deserialize, Serialize};

use super::RngState;
use crate::error::check_dim;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Silu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Silu => z / (1.0 + (-z).exp()),
            Activation::Identity => z,
        }
    }

    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 + z * (1.0 - s))
            }
            Activation::Identity => 1.0,
        }
    }
}

/// One affine map followed by an elementwise activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `out_dim x in_dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        check_dim("layer weights", in_dim * out_dim, weights.len())?;
        check_dim("layer bias", out_dim, bias.len())?;
        Ok(Layer {
            in_dim,
            out_dim,
            weights,
            bias,
            activation,
        })
    }

    #[inline]
    fn affine_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.weights
                .chunks_exact(self.in_dim)
                .zip(&self.bias)
                .map(|(row, b)| dot(row, x) + b),
        );
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators in a fixed order: vectorizes and stays deterministic.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Values recorded by a forward pass, needed for the backward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Input fed to each layer (the network input, then each hidden output).
    pub inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer, output layer included.
    pub pre: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Parameter gradients with the same shapes as the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w *= s);
            l.bias.iter_mut().for_each(|b| *b *= s);
        }
    }

    pub fn reset(&mut self) {
        self.scale(0.0);
    }

    pub fn is_zero(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|&g| g == 0.0))
    }
}

/// A multilayer perceptron. Layer `i`'s output dim equals layer `i+1`'s
/// input dim.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layers: Vec<Layer>,
}

impl DenseNet {
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("network needs at least one layer"));
        }
        for pair in layers.windows(2) {
            check_dim("layer chaining", pair[0].out_dim, pair[1].in_dim)?;
        }
        Ok(DenseNet { layers })
    }

    /// Glorot-uniform weights, zero biases. `dims` lists every width from
    /// input to output; `activations` has one entry per layer.
    pub fn glorot(dims: &[usize], activations: &[Activation], rng: &mut RngState) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::invalid("need at least input and output dims"));
        }
        check_dim("activations per layer", dims.len() - 1, activations.len())?;
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(w, &act)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights = (0..fan_in * fan_out)
                    .map(|_| rng.uniform_range(-a, a))
                    .collect();
                Layer {
                    in_dim: fan_in,
                    out_dim: fan_out,
                    weights,
                    bias: vec![0.0; fan_out],
                    activation: act,
                }
            })
            .collect();
        DenseNet::from_layers(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Forward> {
        check_dim("network input", self.input_dim(), x.len())?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut current = x.to_vec();
        for layer in &self.layers {
            let mut z = Vec::with_capacity(layer.out_dim);
            layer.affine_into(&current, &mut z);
            let a: Vec<f64> = z.iter().map(|&v| layer.activation.apply(v)).collect();
            inputs.push(std::mem::replace(&mut current, a));
            pre.push(z);
        }
        Ok(Forward {
            inputs,
            pre,
            output: current,
        })
    }

    /// Output only, without keeping intermediate values.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("network input", self.input_dim(), x.len())?;
        let mut current = x.to_vec();
        let mut z = Vec::new();
        for layer in &self.layers {
            layer.affine_into(&current, &mut z);
            current.clear();
            current.extend(z.iter().map(|&v| layer.activation.apply(v)));
        }
        Ok(current)
    }

    /// Pre-activations of every layer, without keeping post-activations.
    pub fn pre_activations(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        Ok(self.forward(x)?.pre)
    }

    /// Reverse-mode pass for a scalar loss whose gradient with respect to
    /// the network output is `out_grad`. Parameter gradients are added into
    /// `grads`; the gradient with respect to the input is returned.
    pub fn backward_into(
        &self,
        fwd: &Forward,
        out_grad: &[f64],
        grads: &mut Gradients,
    ) -> Result<Vec<f64>> {
        check_dim("output gradient", self.output_dim(), out_grad.len())?;
        check_dim("forward trace", self.layers.len(), fwd.pre.len())?;
        check_dim("gradient buffers", self.layers.len(), grads.layers.len())?;
        let mut upstream = out_grad.to_vec();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let z = &fwd.pre[idx];
            let input = &fwd.inputs[idx];
            let delta: Vec<f64> = upstream
                .iter()
                .zip(z)
                .map(|(g, &zv)| g * layer.activation.derivative(zv))
                .collect();
            let g = &mut grads.layers[idx];
            let mut down = vec![0.0; layer.in_dim];
            for (o, &d) in delta.iter().enumerate() {
                g.bias[o] += d;
                if d == 0.0 {
                    continue;
                }
                let row = o * layer.in_dim..(o + 1) * layer.in_dim;
                let gw = &mut g.weights[row.clone()];
                let w = &layer.weights[row];
                for i in 0..layer.in_dim {
                    gw[i] += d * input[i];
                    down[i] += w[i] * d;
                }
            }
            upstream = down;
        }
        Ok(upstream)
    }

    /// Convenience wrapper: runs forward and backward for one input.
    pub fn gradient(&self, x: &[f64], out_grad: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        let fwd = self.forward(x)?;
        let mut grads = Gradients::zeros_like(self);
        let input_grad = self.backward_into(&fwd, out_grad, &mut grads)?;
        Ok((grads, input_grad))
    }

    pub fn to_document(&self) -> NetDocument {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(|l| l.out_dim));
        NetDocument {
            format_version: NetDocument::FORMAT_VERSION,
            dims,
            activations: self.layers.iter().map(|l| l.activation).collect(),
            weights: self.layers.iter().map(|l| l.weights.clone()).collect(),
            biases: self.layers.iter().map(|l| l.bias.clone()).collect(),
        }
    }

    pub fn from_document(doc: &NetDocument) -> Result<Self> {
        if doc.format_version != NetDocument::FORMAT_VERSION {
            return Err(Error::data(format!(
                "unsupported network format_version {} (expected {})",
                doc.format_version,
                NetDocument::FORMAT_VERSION
            )));
        }
        let n = doc.activations.len();
        if doc.dims.len() != n + 1 || doc.weights.len() != n || doc.biases.len() != n {
            return Err(Error::data("network document has inconsistent layer counts"));
        }
        let layers = (0..n)
            .map(|i| {
                Layer::new(
                    doc.dims[i],
                    doc.dims[i + 1],
                    doc.weights[i].clone(),
                    doc.biases[i].clone(),
                    doc.activations[i],
                )
            })
            .collect::<Result<Vec<_>>>()?;
        DenseNet::from_layers(layers)
    }
}

/// Versioned JSON form of a [`DenseNet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetDocument {
    pub format_version: u32,
    pub dims: Vec<usize>,
    pub activations: Vec<Activation>,
    /// One row-major array per layer.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl NetDocument {
    pub const FORMAT_VERSION: u32 = 1;
}

impl Serialize for DenseNet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_document().serialize(s)
    }
}

impl<'de> Deserialize<'de> for DenseNet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = NetDocument::deserialize(d)?;
        DenseNet::from_document(&doc).map_err(serde::de::Error::custom)
    }
}
