//! Fully connected network with exact reverse-mode gradients.
//!
//! Inputs are row-major batches (`batch × width`). Dropout is applied to a
//! layer's input, scaled by `1/(1-p)`, and only when the caller supplies an
//! rng to draw masks from.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Softplus,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
            Activation::Softplus => softplus(z),
            Activation::Identity => z,
        }
    }

    /// Derivative in terms of the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Softplus => sigmoid(z),
            Activation::Identity => 1.0,
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z + (-z).exp()
    } else {
        z.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inverse(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp_m1()).ln()
    } else {
        y.exp_m1().ln()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LayerFile", into = "LayerFile")]
pub struct Layer {
    /// `inputs × outputs`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
    /// Dropout probability on this layer's input.
    pub input_dropout: f64,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    inputs: usize,
    outputs: usize,
    activation: Activation,
    input_dropout: f64,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl TryFrom<LayerFile> for Layer {
    type Error = Error;
    fn try_from(f: LayerFile) -> Result<Self> {
        if f.bias.len() != f.outputs {
            return Err(Error::DimensionMismatch {
                expected: f.outputs,
                got: f.bias.len(),
            });
        }
        let weights = Array2::from_shape_vec((f.inputs, f.outputs), f.weights).map_err(|_| {
            Error::InvalidInput(format!("layer weights do not have shape {}x{}", f.inputs, f.outputs))
        })?;
        check_dropout(f.input_dropout)?;
        Ok(Layer {
            weights,
            bias: Array1::from(f.bias),
            activation: f.activation,
            input_dropout: f.input_dropout,
        })
    }
}

impl From<Layer> for LayerFile {
    fn from(l: Layer) -> Self {
        let (inputs, outputs) = l.weights.dim();
        LayerFile {
            inputs,
            outputs,
            activation: l.activation,
            input_dropout: l.input_dropout,
            weights: l.weights.iter().copied().collect(),
            bias: l.bias.to_vec(),
        }
    }
}

fn check_dropout(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("dropout rate must be in [0, 1), got {p}")));
    }
    Ok(())
}

/// Shape of a network: widths including input and output, hidden and output
/// activations, and per-layer input dropout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub hidden: Activation,
    pub output: Activation,
    /// One rate per layer; missing entries mean no dropout.
    pub dropout: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Per-layer activations retained by a forward pass for backpropagation.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// Layer inputs after dropout.
    inputs: Vec<Array2<f64>>,
    /// Scaled dropout masks, when dropout was applied.
    masks: Vec<Option<Array2<f64>>>,
    pre: Vec<Array2<f64>>,
    post: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.post.last().expect("network has at least one layer")
    }
}

/// Parameter gradients, one `(dW, db)` per layer.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl MlpGrads {
    pub fn zeros_like(net: &Mlp) -> Self {
        MlpGrads {
            layers: net
                .layers
                .iter()
                .map(|l| (Array2::zeros(l.weights.dim()), Array1::zeros(l.bias.len())))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            *w += ow;
            *b += ob;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for (w, b) in &mut self.layers {
            *w *= s;
            *b *= s;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()))
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl Mlp {
    /// Random initialization: He-uniform for rectifier layers, Glorot-uniform
    /// otherwise; zero biases.
    pub fn new<R: Rng + ?Sized>(spec: &MlpSpec, rng: &mut R) -> Result<Self> {
        if spec.widths.len() < 2 || spec.widths.contains(&0) {
            return Err(Error::InvalidParameter(format!(
                "network needs at least two nonzero widths, got {:?}",
                spec.widths
            )));
        }
        let n_layers = spec.widths.len() - 1;
        let mut layers = Vec::with_capacity(n_layers);
        for i in 0..n_layers {
            let (fan_in, fan_out) = (spec.widths[i], spec.widths[i + 1]);
            let activation = if i + 1 == n_layers { spec.output } else { spec.hidden };
            let limit = match activation {
                Activation::Relu => (6.0 / fan_in as f64).sqrt(),
                _ => (6.0 / (fan_in + fan_out) as f64).sqrt(),
            };
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
            let weights = Array2::from_shape_simple_fn((fan_in, fan_out), || dist.sample(rng));
            let input_dropout = spec.dropout.get(i).copied().unwrap_or(0.0);
            check_dropout(input_dropout)?;
            layers.push(Layer {
                weights,
                bias: Array1::zeros(fan_out),
                activation,
                input_dropout,
            });
        }
        Ok(Mlp { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidParameter("network needs at least one layer".into()));
        }
        for w in layers.windows(2) {
            if w[0].weights.ncols() != w[1].weights.nrows() {
                return Err(Error::DimensionMismatch {
                    expected: w[0].weights.ncols(),
                    got: w[1].weights.nrows(),
                });
            }
        }
        Ok(Mlp { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().expect("nonempty").weights.ncols()
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_width()];
        w.extend(self.layers.iter().map(|l| l.weights.ncols()));
        w
    }

    /// Forward pass. Dropout masks are drawn from `dropout_rng` when given;
    /// without it the pass is deterministic.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        x: ArrayView2<f64>,
        mut dropout_rng: Option<&mut R>,
    ) -> Result<ForwardCache> {
        if x.ncols() != self.input_width() {
            return Err(Error::DimensionMismatch {
                expected: self.input_width(),
                got: x.ncols(),
            });
        }
        let n = self.layers.len();
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(n),
            masks: Vec::with_capacity(n),
            pre: Vec::with_capacity(n),
            post: Vec::with_capacity(n),
        };
        let mut current = x.to_owned();
        for layer in &self.layers {
            let mask = match dropout_rng.as_deref_mut() {
                Some(rng) if layer.input_dropout > 0.0 => {
                    let keep = 1.0 - layer.input_dropout;
                    let m = Array2::from_shape_simple_fn(current.dim(), || {
                        if rng.random::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    });
                    current *= &m;
                    Some(m)
                }
                _ => None,
            };
            let mut z = current.dot(&layer.weights);
            z += &layer.bias;
            let act = layer.activation;
            let a = z.mapv(|v| act.apply(v));
            cache.inputs.push(current);
            cache.masks.push(mask);
            cache.pre.push(z);
            current = a.clone();
            cache.post.push(a);
        }
        Ok(cache)
    }

    /// Deterministic forward pass returning only the output.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let cache = self.forward::<rand::rngs::ThreadRng>(x, None)?;
        Ok(cache.post.into_iter().last().expect("nonempty"))
    }

    /// Reverse pass for `dL/d(output)`; returns parameter gradients summed
    /// over the batch.
    pub fn backward(&self, cache: &ForwardCache, grad_output: ArrayView2<f64>) -> Result<MlpGrads> {
        Ok(self.backward_with_input(cache, grad_output)?.0)
    }

    /// As [`Mlp::backward`], also returning `dL/d(input)`.
    pub fn backward_with_input(
        &self,
        cache: &ForwardCache,
        grad_output: ArrayView2<f64>,
    ) -> Result<(MlpGrads, Array2<f64>)> {
        if grad_output.dim() != cache.output().dim() {
            return Err(Error::DimensionMismatch {
                expected: cache.output().len(),
                got: grad_output.len(),
            });
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = grad_output.to_owned();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let act = layer.activation;
            Zip::from(&mut delta)
                .and(&cache.pre[i])
                .and(&cache.post[i])
                .for_each(|d, &z, &a| *d *= act.derivative(z, a));
            let dw = cache.inputs[i].t().dot(&delta);
            let db = delta.sum_axis(Axis(0));
            let mut dx = delta.dot(&layer.weights.t());
            if let Some(m) = &cache.masks[i] {
                dx *= m;
            }
            grads.push((dw, db));
            delta = dx;
        }
        grads.reverse();
        Ok((MlpGrads { layers: grads }, delta))
    }
}
