//! Sequential networks described by a serializable layer list.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layers::{self, BatchNormCache};
use super::tensor::{Real, Tensor};
use crate::{Error, Result};

/// Momentum of the running batch-norm averages: `running = m * running + (1 - m) * batch`.
pub const BN_MOMENTUM: f64 = 0.99;

/// One stage of a sequential network. Parameter tensors are stored in
/// [`NetworkParams::tensors`] under `"{name}.{field}"`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Layer {
    Linear { name: String, inputs: usize, outputs: usize },
    Conv { name: String, in_channels: usize, out_channels: usize, kernel: usize, stride: usize, pad: usize },
    ConvTranspose { name: String, in_channels: usize, out_channels: usize, kernel: usize, stride: usize, pad: usize },
    BatchNorm { name: String, channels: usize },
    LeakyRelu,
    Sigmoid,
    /// Reshape each sample to `shape` (batch axis untouched).
    Reshape { shape: Vec<usize> },
}

impl Layer {
    /// `(field, shape, trainable)` of every tensor the layer owns.
    fn tensor_specs(&self) -> Vec<(String, Vec<usize>, bool)> {
        let n = |name: &str, field: &str| format!("{name}.{field}");
        match self {
            Layer::Linear { name, inputs, outputs } => {
                vec![(n(name, "weight"), vec![*outputs, *inputs], true), (n(name, "bias"), vec![*outputs], true)]
            }
            Layer::Conv { name, in_channels, out_channels, kernel, .. } => vec![
                (n(name, "weight"), vec![*out_channels, *in_channels, *kernel, *kernel], true),
                (n(name, "bias"), vec![*out_channels], true),
            ],
            Layer::ConvTranspose { name, in_channels, out_channels, kernel, .. } => vec![
                (n(name, "weight"), vec![*in_channels, *out_channels, *kernel, *kernel], true),
                (n(name, "bias"), vec![*out_channels], true),
            ],
            Layer::BatchNorm { name, channels } => vec![
                (n(name, "gamma"), vec![*channels], true),
                (n(name, "beta"), vec![*channels], true),
                (n(name, "running_mean"), vec![*channels], false),
                (n(name, "running_var"), vec![*channels], false),
            ],
            Layer::LeakyRelu | Layer::Sigmoid | Layer::Reshape { .. } => Vec::new(),
        }
    }
}

/// Layer topology plus every named tensor (trainable parameters and batch-norm buffers).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams<T> {
    pub topology: Vec<Layer>,
    pub tensors: BTreeMap<String, Tensor<T>>,
}

/// Intermediate values kept by a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct Tape<T> {
    inputs: Vec<Tensor<T>>,
    output: Tensor<T>,
    bn: Vec<Option<BatchNormCache<T>>>,
}

impl<T> Tape<T> {
    pub fn output(&self) -> &Tensor<T> {
        &self.output
    }
}

pub type Grads<T> = BTreeMap<String, Tensor<T>>;

impl<T: Real> NetworkParams<T> {
    /// Fresh parameters: convolution weights `N(0, 0.02)`, linear weights
    /// `N(0, 1/fan_in)`, zero biases, unit batch-norm scales.
    pub fn init(topology: Vec<Layer>, rng: &mut impl Rng) -> Self {
        let mut tensors = BTreeMap::new();
        for layer in &topology {
            for (name, shape, _) in layer.tensor_specs() {
                let field = name.rsplit('.').next().unwrap_or_default().to_string();
                let t = match (layer, field.as_str()) {
                    (_, "weight") => {
                        let std = match layer {
                            Layer::Linear { inputs, .. } => (1.0 / *inputs as f64).sqrt(),
                            _ => 0.02,
                        };
                        let normal = Normal::new(0.0, std).expect("positive std");
                        let n: usize = shape.iter().product();
                        let data = (0..n).map(|_| T::lit(normal.sample(rng))).collect();
                        Tensor::from_vec(&shape, data).expect("init shape")
                    }
                    (_, "gamma") | (_, "running_var") => Tensor::filled(&shape, T::one()),
                    _ => Tensor::zeros(&shape),
                };
                tensors.insert(name, t);
            }
        }
        Self { topology, tensors }
    }

    /// Check that every tensor the topology needs is present with the right shape.
    pub fn validate(&self) -> Result<()> {
        for layer in &self.topology {
            for (name, shape, _) in layer.tensor_specs() {
                let t = self.tensors.get(&name).ok_or_else(|| Error::Shape(format!("missing tensor `{name}`")))?;
                if t.shape() != shape.as_slice() {
                    return Err(Error::Shape(format!("tensor `{name}` has shape {:?}, expected {shape:?}", t.shape())));
                }
                if !t.all_finite() {
                    return Err(Error::NonFinite(name));
                }
            }
        }
        Ok(())
    }

    /// Names of every tensor the topology owns, trainable or not.
    pub fn tensor_names(&self) -> Vec<String> {
        self.topology.iter().flat_map(|l| l.tensor_specs()).map(|s| s.0).collect()
    }

    /// Names of trainable tensors, in a fixed order.
    pub fn trainable_names(&self) -> Vec<String> {
        let mut names: Vec<String> =
            self.topology.iter().flat_map(|l| l.tensor_specs()).filter(|s| s.2).map(|s| s.0).collect();
        names.sort();
        names
    }

    pub fn parameter_count(&self) -> usize {
        self.trainable_names().iter().map(|n| self.tensors[n].len()).sum()
    }

    fn get(&self, name: &str, field: &str) -> &Tensor<T> {
        &self.tensors[&format!("{name}.{field}")]
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let want: Option<Vec<usize>> = match self.topology.first() {
            Some(Layer::Linear { inputs, .. }) => Some(vec![*inputs]),
            Some(Layer::Conv { in_channels, .. }) | Some(Layer::ConvTranspose { in_channels, .. }) => {
                (x.shape().len() == 4 && x.shape()[1] == *in_channels).then(|| x.shape()[1..].to_vec())
            }
            _ => return Ok(()),
        };
        match want {
            Some(w) if x.shape().len() >= 2 && x.shape()[1..] == w[..] && x.batch() > 0 => Ok(()),
            _ => Err(Error::Shape(format!("network input has shape {:?}", x.shape()))),
        }
    }

    /// Inference-mode forward pass (batch norm uses running statistics).
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for layer in &self.topology {
            cur = match layer {
                Layer::BatchNorm { name, .. } => layers::batch_norm_eval(
                    &cur,
                    self.get(name, "gamma"),
                    self.get(name, "beta"),
                    self.get(name, "running_mean"),
                    self.get(name, "running_var"),
                ),
                _ => self.apply(layer, &cur)?,
            };
        }
        Ok(cur)
    }

    fn apply(&self, layer: &Layer, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(match layer {
            Layer::Linear { name, .. } => layers::linear_forward(x, self.get(name, "weight"), self.get(name, "bias")),
            Layer::Conv { name, stride, pad, .. } => {
                layers::conv2d_forward(x, self.get(name, "weight"), self.get(name, "bias"), *stride, *pad)
            }
            Layer::ConvTranspose { name, stride, pad, .. } => {
                layers::conv_transpose2d_forward(x, self.get(name, "weight"), self.get(name, "bias"), *stride, *pad)
            }
            Layer::LeakyRelu => layers::leaky_relu(x),
            Layer::Sigmoid => layers::sigmoid(x),
            Layer::Reshape { shape } => {
                let mut full = vec![x.batch()];
                full.extend_from_slice(shape);
                x.clone().reshape(&full)?
            }
            Layer::BatchNorm { .. } => unreachable!("batch norm handled by caller"),
        })
    }

    /// Training-mode forward pass: batch norm normalizes with batch statistics.
    /// Running averages are left alone; see [`Self::update_running_stats`].
    pub fn forward_train(&self, x: &Tensor<T>) -> Result<Tape<T>> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.topology.len());
        let mut bn = Vec::with_capacity(self.topology.len());
        let mut cur = x.clone();
        for layer in &self.topology {
            let next = match layer {
                Layer::BatchNorm { name, .. } => {
                    let (y, cache) = layers::batch_norm_train(&cur, self.get(name, "gamma"), self.get(name, "beta"));
                    bn.push(Some(cache));
                    y
                }
                _ => {
                    bn.push(None);
                    self.apply(layer, &cur)?
                }
            };
            inputs.push(std::mem::replace(&mut cur, next));
        }
        Ok(Tape { inputs, output: cur, bn })
    }

    /// Fold the batch statistics recorded in `tape` into the running averages
    /// (unbiased variance, momentum [`BN_MOMENTUM`]).
    pub fn update_running_stats(&mut self, tape: &Tape<T>) {
        let m = BN_MOMENTUM;
        for (idx, layer) in self.topology.iter().enumerate() {
            let (Layer::BatchNorm { name, .. }, Some(cache)) = (layer, tape.bn[idx].as_ref()) else {
                continue;
            };
            let x = &tape.inputs[idx];
            let count = (x.len() / x.shape()[1]) as f64;
            let unbias = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
            let mean = self.tensors.get_mut(&format!("{name}.running_mean")).expect("running mean");
            for (r, b) in mean.data_mut().iter_mut().zip(&cache.batch_mean) {
                *r = T::lit(m * r.f64() + (1.0 - m) * b);
            }
            let var = self.tensors.get_mut(&format!("{name}.running_var")).expect("running var");
            for (r, b) in var.data_mut().iter_mut().zip(&cache.batch_var) {
                *r = T::lit(m * r.f64() + (1.0 - m) * b * unbias);
            }
        }
    }

    /// Replace the running statistics of every batch-norm layer by the plain
    /// average over `tapes` of the batch mean and (unbiased) batch variance.
    pub fn set_running_stats(&mut self, tapes: &[Tape<T>]) {
        if tapes.is_empty() {
            return;
        }
        let k = tapes.len() as f64;
        for (idx, layer) in self.topology.iter().enumerate() {
            let Layer::BatchNorm { name, channels } = layer else { continue };
            let (mut mean, mut var) = (vec![0.0; *channels], vec![0.0; *channels]);
            for tape in tapes {
                let Some(cache) = tape.bn[idx].as_ref() else { continue };
                let x = &tape.inputs[idx];
                let count = (x.len() / x.shape()[1]) as f64;
                let unbias = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
                for c in 0..*channels {
                    mean[c] += cache.batch_mean[c] / k;
                    var[c] += cache.batch_var[c] * unbias / k;
                }
            }
            for (suffix, values) in [("running_mean", &mean), ("running_var", &var)] {
                let t = self.tensors.get_mut(&format!("{name}.{suffix}")).expect("running stats");
                for (r, v) in t.data_mut().iter_mut().zip(values) {
                    *r = T::lit(*v);
                }
            }
        }
    }

    /// Backpropagate `gy` (gradient w.r.t. the tape output) through the
    /// network. Returns the input gradient and the gradient of every trainable tensor.
    pub fn backward(&self, tape: &Tape<T>, gy: &Tensor<T>) -> Result<(Tensor<T>, Grads<T>)> {
        if gy.shape() != tape.output.shape() {
            return Err(Error::Shape(format!(
                "output gradient {:?} does not match output {:?}",
                gy.shape(),
                tape.output.shape()
            )));
        }
        let mut grads = BTreeMap::new();
        let mut g = gy.clone();
        for idx in (0..self.topology.len()).rev() {
            let x = &tape.inputs[idx];
            g = match &self.topology[idx] {
                Layer::Linear { name, .. } => {
                    let (gx, gw, gb) = layers::linear_backward(x, self.get(name, "weight"), &g);
                    grads.insert(format!("{name}.weight"), gw);
                    grads.insert(format!("{name}.bias"), gb);
                    gx
                }
                Layer::Conv { name, stride, pad, .. } => {
                    let (gx, gw, gb) = layers::conv2d_backward(x, self.get(name, "weight"), &g, *stride, *pad);
                    grads.insert(format!("{name}.weight"), gw);
                    grads.insert(format!("{name}.bias"), gb);
                    gx
                }
                Layer::ConvTranspose { name, stride, pad, .. } => {
                    let (gx, gw, gb) =
                        layers::conv_transpose2d_backward(x, self.get(name, "weight"), &g, *stride, *pad);
                    grads.insert(format!("{name}.weight"), gw);
                    grads.insert(format!("{name}.bias"), gb);
                    gx
                }
                Layer::BatchNorm { name, .. } => {
                    let cache = tape.bn[idx].as_ref().expect("batch norm cache");
                    let (gx, gg, gb) = layers::batch_norm_backward(cache, self.get(name, "gamma"), &g);
                    grads.insert(format!("{name}.gamma"), gg);
                    grads.insert(format!("{name}.beta"), gb);
                    gx
                }
                Layer::LeakyRelu => layers::leaky_relu_backward(x, &g),
                Layer::Sigmoid => {
                    let y = if idx + 1 < tape.inputs.len() { &tape.inputs[idx + 1] } else { &tape.output };
                    layers::sigmoid_backward(y, &g)
                }
                Layer::Reshape { .. } => g.reshape(x.shape())?,
            };
        }
        Ok((g, grads))
    }

    /// Zero every tensor (weights, biases, scales and buffers alike).
    pub fn zeroed(&self) -> Self {
        let tensors = self.tensors.iter().map(|(k, v)| (k.clone(), Tensor::zeros(v.shape()))).collect();
        Self { topology: self.topology.clone(), tensors }
    }

    pub fn cast<U: Real>(&self) -> NetworkParams<U> {
        NetworkParams {
            topology: self.topology.clone(),
            tensors: self.tensors.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }
}

/// Sum `add` into `acc`, inserting names not yet present.
pub fn accumulate<T: Real>(acc: &mut Grads<T>, add: Grads<T>) {
    for (name, g) in add {
        match acc.get_mut(&name) {
            Some(a) => a.add_assign(&g),
            None => {
                acc.insert(name, g);
            }
        }
    }
}
