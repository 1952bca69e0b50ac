use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LoclError, Result};
use crate::nn::ops;
use crate::nn::Tensor;

/// Layer kind and configuration, without weights. This is what the
/// checkpoint manifest records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerSpec {
    Conv1d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
    },
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Maxpool1d {
        factor: usize,
    },
    Upsample1d {
        factor: usize,
    },
    Leakyrelu {
        slope: f64,
    },
    /// Per-sample reshape; the batch axis is kept.
    Reshape {
        shape: Vec<usize>,
    },
}

impl LayerSpec {
    /// Shapes of the trainable tensors, weight first.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
            } => vec![vec![out_channels, in_channels, kernel], vec![out_channels]],
            LayerSpec::Dense { inputs, outputs } => vec![vec![outputs, inputs], vec![outputs]],
            _ => Vec::new(),
        }
    }

    fn fans(&self) -> (usize, usize) {
        match *self {
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
            } => (in_channels * kernel, out_channels * kernel),
            LayerSpec::Dense { inputs, outputs } => (inputs, outputs),
            _ => (0, 0),
        }
    }
}

/// A layer together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    /// `[weight, bias]` for conv/dense, empty otherwise.
    pub params: Vec<Tensor>,
}

impl Layer {
    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn init(spec: LayerSpec, rng: &mut ChaCha8Rng) -> Self {
        let (fan_in, fan_out) = spec.fans();
        let params = spec
            .param_shapes()
            .iter()
            .enumerate()
            .map(|(i, shape)| {
                let mut t = Tensor::zeros(shape);
                if i == 0 {
                    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    t.data_mut()
                        .iter_mut()
                        .for_each(|v| *v = rng.gen_range(-limit..limit));
                }
                t
            })
            .collect();
        Layer { spec, params }
    }

    pub fn with_params(spec: LayerSpec, params: Vec<Tensor>) -> Result<Self> {
        let shapes = spec.param_shapes();
        if shapes.len() != params.len()
            || shapes.iter().zip(&params).any(|(s, p)| s.as_slice() != p.shape())
        {
            return Err(LoclError::shape(format!(
                "parameters {:?} do not match layer {spec:?}",
                params.iter().map(|p| p.shape().to_vec()).collect::<Vec<_>>()
            )));
        }
        Ok(Layer { spec, params })
    }

    fn forward(&self, x: &Tensor) -> Result<(Tensor, Option<Vec<usize>>)> {
        Ok(match &self.spec {
            LayerSpec::Conv1d { .. } => {
                (ops::conv1d_forward(x, &self.params[0], &self.params[1])?, None)
            }
            LayerSpec::Dense { .. } => {
                (ops::dense_forward(x, &self.params[0], &self.params[1])?, None)
            }
            LayerSpec::Maxpool1d { factor } => {
                let (y, idx) = ops::maxpool1d_forward(x, *factor)?;
                (y, Some(idx))
            }
            LayerSpec::Upsample1d { factor } => (ops::upsample1d_forward(x, *factor)?, None),
            LayerSpec::Leakyrelu { slope } => (ops::leaky_relu_forward(x, *slope), None),
            LayerSpec::Reshape { shape } => {
                let mut full = vec![x.dim(0)];
                full.extend_from_slice(shape);
                (x.clone().reshape(&full)?, None)
            }
        })
    }

    fn backward(&mut self, x: &Tensor, aux: Option<&[usize]>, grad: Tensor) -> Result<Tensor> {
        match &self.spec {
            LayerSpec::Conv1d { .. } => {
                let g = ops::conv1d_backward(&grad, x, &self.params[0])?;
                self.params[0].accumulate_grad(g.weight.data());
                self.params[1].accumulate_grad(g.bias.data());
                Ok(g.input)
            }
            LayerSpec::Dense { .. } => {
                let g = ops::dense_backward(&grad, x, &self.params[0])?;
                self.params[0].accumulate_grad(g.weight.data());
                self.params[1].accumulate_grad(g.bias.data());
                Ok(g.input)
            }
            LayerSpec::Maxpool1d { .. } => {
                let idx = aux.ok_or_else(|| LoclError::shape("maxpool backward without argmax"))?;
                ops::maxpool1d_backward(&grad, idx, x.shape())
            }
            LayerSpec::Upsample1d { factor } => ops::upsample1d_backward(&grad, *factor),
            LayerSpec::Leakyrelu { slope } => ops::leaky_relu_backward(&grad, x, *slope),
            LayerSpec::Reshape { .. } => grad.reshape(x.shape()),
        }
    }
}

/// Intermediate values recorded by [`Network::forward`] for the backward pass.
pub struct Tape {
    inputs: Vec<Tensor>,
    aux: Vec<Option<Vec<usize>>>,
}

/// A straight chain of layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<Layer>,
}

impl Network {
    pub fn init(specs: Vec<LayerSpec>, rng: &mut ChaCha8Rng) -> Self {
        Network {
            layers: specs.into_iter().map(|s| Layer::init(s, rng)).collect(),
        }
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec.clone()).collect()
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Tape)> {
        let mut tape = Tape {
            inputs: Vec::with_capacity(self.layers.len()),
            aux: Vec::with_capacity(self.layers.len()),
        };
        let mut cur = x.clone();
        for layer in &self.layers {
            let (next, aux) = layer.forward(&cur)?;
            tape.inputs.push(cur);
            tape.aux.push(aux);
            cur = next;
        }
        Ok((cur, tape))
    }

    /// Forward pass without recording anything.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = layer.forward(&cur)?.0;
        }
        Ok(cur)
    }

    /// Back-propagate `grad` through the recorded tape, accumulating into
    /// each parameter's gradient slot. Returns the gradient w.r.t. the input.
    pub fn backward(&mut self, tape: &Tape, grad: Tensor) -> Result<Tensor> {
        let mut g = grad;
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            g = layer.backward(&tape.inputs[i], tape.aux[i].as_deref(), g)?;
        }
        Ok(g)
    }

    pub fn params(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| l.params.iter())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers.iter_mut().flat_map(|l| l.params.iter_mut())
    }

    /// `(name, tensor)` pairs such as `layer3.weight`.
    pub fn named_params_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            for (j, p) in layer.params.iter_mut().enumerate() {
                let kind = if j == 0 { "weight" } else { "bias" };
                out.push((format!("{prefix}layer{i}.{kind}"), p));
            }
        }
        out
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().for_each(Tensor::zero_grad);
    }

    pub fn num_params(&self) -> usize {
        self.params().map(Tensor::numel).sum()
    }
}
