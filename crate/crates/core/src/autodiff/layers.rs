//! Neural-network layers on top of the graph.

use std::rc::Rc;

use super::{Graph, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const DEFAULT_LEAKY_SLOPE: f32 = 0.2;
pub const DEFAULT_DROPOUT: f32 = 0.3;
pub const BN_EPS: f32 = 1e-5;
pub const BN_MOMENTUM: f32 = 0.1;
pub const INIT_STD: f32 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    /// `x W + b` with `W: [in, out]`.
    Linear { in_features: usize, out_features: usize },
    /// Row lookup into a `[num, dim]` table; the input holds integer indices.
    Embedding { num: usize, dim: usize },
    LeakyRelu { slope: f32 },
    Relu,
    Tanh,
    Sigmoid,
    /// Inverted dropout: kept values are scaled by `1 / (1 - rate)`.
    Dropout { rate: f32 },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    /// Per-channel normalization of `[N, C]` or `[N, C, H, W]` input.
    BatchNorm { channels: usize },
    MaxPool2d { size: usize, stride: usize },
    /// `[N, ...] -> [N, prod(...)]`.
    Flatten,
}

/// Learned tensors of one layer and their name suffixes, in storage order.
pub const LINEAR_PARAMS: &[&str] = &["weight", "bias"];
pub const EMBEDDING_PARAMS: &[&str] = &["table"];
pub const BATCHNORM_PARAMS: &[&str] = &["gamma", "beta", "running_mean", "running_var"];

/// Name suffixes of non-trainable buffers.
pub fn is_buffer(name: &str) -> bool {
    name.ends_with(".running_mean") || name.ends_with(".running_var")
}

impl LayerSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: usize| {
            if v == 0 {
                Err(Error::contract(format!("{name} must be positive in {self:?}")))
            } else {
                Ok(())
            }
        };
        match *self {
            LayerSpec::Linear { in_features, out_features } => {
                positive("in_features", in_features)?;
                positive("out_features", out_features)
            }
            LayerSpec::Embedding { num, dim } => {
                positive("num", num)?;
                positive("dim", dim)
            }
            LayerSpec::LeakyRelu { slope } => {
                if slope > 0.0 && slope < 1.0 {
                    Ok(())
                } else {
                    Err(Error::contract(format!("leaky slope {slope} outside (0, 1)")))
                }
            }
            LayerSpec::Dropout { rate } => {
                if (0.0..1.0).contains(&rate) {
                    Ok(())
                } else {
                    Err(Error::contract(format!("dropout rate {rate} outside [0, 1)")))
                }
            }
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                ..
            } => {
                positive("in_channels", in_channels)?;
                positive("out_channels", out_channels)?;
                positive("kernel", kernel)?;
                positive("stride", stride)
            }
            LayerSpec::BatchNorm { channels } => positive("channels", channels),
            LayerSpec::MaxPool2d { size, stride } => {
                positive("size", size)?;
                positive("stride", stride)
            }
            LayerSpec::Relu | LayerSpec::Tanh | LayerSpec::Sigmoid | LayerSpec::Flatten => Ok(()),
        }
    }

    pub fn param_suffixes(&self) -> &'static [&'static str] {
        match self {
            LayerSpec::Linear { .. } | LayerSpec::Conv2d { .. } => LINEAR_PARAMS,
            LayerSpec::Embedding { .. } => EMBEDDING_PARAMS,
            LayerSpec::BatchNorm { .. } => BATCHNORM_PARAMS,
            _ => &[],
        }
    }

    /// Initial values for [`param_suffixes`](Self::param_suffixes).
    ///
    /// Weights are drawn from N(0, 0.02²) and biases start at zero. Embedding
    /// tables start as the identity (one-hot rows); batch norm starts as the
    /// identity transform with unit running variance.
    pub fn init(&self, rng: &mut Rng) -> Vec<Tensor> {
        match *self {
            LayerSpec::Linear { in_features, out_features } => vec![
                rng.normal_tensor(&[in_features, out_features], INIT_STD),
                Tensor::zeros(&[out_features]),
            ],
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![
                rng.normal_tensor(&[out_channels, in_channels, kernel, kernel], INIT_STD),
                Tensor::zeros(&[out_channels]),
            ],
            LayerSpec::Embedding { num, dim } => {
                let mut t = Tensor::zeros(&[num, dim]);
                for i in 0..num.min(dim) {
                    t.data_mut()[i * dim + i] = 1.0;
                }
                vec![t]
            }
            LayerSpec::BatchNorm { channels } => vec![
                Tensor::ones(&[channels]),
                Tensor::zeros(&[channels]),
                Tensor::zeros(&[channels]),
                Tensor::ones(&[channels]),
            ],
            _ => vec![],
        }
    }

    /// Number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        match *self {
            LayerSpec::Linear { in_features, out_features } => in_features * out_features + out_features,
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => out_channels * in_channels * kernel * kernel + out_channels,
            LayerSpec::Embedding { num, dim } => num * dim,
            LayerSpec::BatchNorm { channels } => 2 * channels,
            _ => 0,
        }
    }
}

/// Exponential moving average of batch statistics.
pub fn update_running(running_mean: &mut Tensor, running_var: &mut Tensor, stats: &super::BatchStats) {
    let unbias = if stats.count > 1 {
        stats.count as f32 / (stats.count - 1) as f32
    } else {
        1.0
    };
    for (r, &m) in running_mean.data_mut().iter_mut().zip(&stats.mean) {
        *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * m;
    }
    for (r, &v) in running_var.data_mut().iter_mut().zip(&stats.var) {
        *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v * unbias;
    }
}

fn dropout_mask(shape: &[usize], rate: f32, rng: &mut Rng) -> Tensor {
    let keep = 1.0 - rate;
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| if rng.uniform() < keep { 1.0 / keep } else { 0.0 })
        .collect();
    Tensor::new(shape, data).expect("shape product matches")
}

fn labels_from(input: &Tensor) -> Result<Vec<usize>> {
    input
        .data()
        .iter()
        .map(|&v| {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::data(format!("embedding index {v} is not a non-negative integer")))
            }
        })
        .collect()
}

/// Output of one layer application.
pub struct LayerOutput<'g> {
    pub output: Var<'g>,
    /// Batch statistics of a train-mode batch norm, for the running averages.
    pub batch_stats: Option<super::BatchStats>,
}

/// Apply one layer.
///
/// `params` are the layer's tensors in [`LayerSpec::param_suffixes`] order;
/// batch norm reads its running statistics from the last two entries in
/// eval mode. Dropout draws its mask from `rng` in train mode only.
pub fn layer_forward<'g>(
    spec: &LayerSpec,
    params: &[Var<'g>],
    input: Var<'g>,
    mode: Mode,
    rng: &mut Rng,
) -> Result<LayerOutput<'g>> {
    let expected = spec.param_suffixes().len();
    if params.len() != expected {
        return Err(Error::contract(format!(
            "{spec:?} takes {expected} parameter tensors, got {}",
            params.len()
        )));
    }
    let plain = |output| Ok(LayerOutput { output, batch_stats: None });
    match *spec {
        LayerSpec::Linear { in_features, out_features } => {
            let shape = input.shape();
            if shape.len() != 2 || shape[1] != in_features {
                return Err(Error::dim(format!(
                    "linear layer expects [m, {in_features}], got {shape:?}"
                )));
            }
            if params[0].shape() != [in_features, out_features] {
                return Err(Error::dim(format!(
                    "linear weight {:?}, expected [{in_features}, {out_features}]",
                    params[0].shape()
                )));
            }
            plain(input.matmul(params[0])?.add(params[1])?)
        }
        LayerSpec::Embedding { num, .. } => {
            let idx = labels_from(&input.value())?;
            if let Some(&bad) = idx.iter().find(|&&i| i >= num) {
                return Err(Error::data(format!("label {bad} out of range for {num} classes")));
            }
            plain(params[0].gather_rows(&idx)?)
        }
        LayerSpec::LeakyRelu { slope } => plain(input.leaky_relu(slope)),
        LayerSpec::Relu => plain(input.relu()),
        LayerSpec::Tanh => plain(input.tanh()),
        LayerSpec::Sigmoid => plain(input.sigmoid()),
        LayerSpec::Dropout { rate } => {
            if mode == Mode::Eval || rate == 0.0 {
                return plain(input);
            }
            let mask = dropout_mask(&input.shape(), rate, rng);
            plain(input.mul_const(Rc::new(mask))?)
        }
        LayerSpec::Conv2d { stride, padding, .. } => {
            plain(input.conv2d(params[0], params[1], stride, padding)?)
        }
        LayerSpec::BatchNorm { .. } => {
            let running = params[2].value();
            let running_var = params[3].value();
            let (output, batch_stats) = match mode {
                Mode::Train => input.batch_norm(params[0], params[1], BN_EPS, None)?,
                Mode::Eval => input.batch_norm(
                    params[0],
                    params[1],
                    BN_EPS,
                    Some((running.data(), running_var.data())),
                )?,
            };
            Ok(LayerOutput { output, batch_stats })
        }
        LayerSpec::MaxPool2d { size, stride } => plain(input.max_pool2d(size, stride)?),
        LayerSpec::Flatten => {
            let shape = input.shape();
            let rows = shape.first().copied().unwrap_or(1);
            let rest = shape.iter().skip(1).product();
            plain(input.reshape(&[rows, rest])?)
        }
    }
}

/// A chain of layers whose parameters are named `"{prefix}.{index}.{suffix}"`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequential {
    pub prefix: String,
    pub layers: Vec<LayerSpec>,
}

impl Sequential {
    pub fn new(prefix: impl Into<String>, layers: Vec<LayerSpec>) -> Self {
        Sequential {
            prefix: prefix.into(),
            layers,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.layers.iter().try_for_each(LayerSpec::validate)
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            for s in layer.param_suffixes() {
                names.push(format!("{}.{i}.{s}", self.prefix));
            }
        }
        names
    }

    pub fn init(&self, rng: &mut Rng) -> Vec<(String, Tensor)> {
        self.param_names()
            .into_iter()
            .zip(self.layers.iter().flat_map(|l| l.init(rng)))
            .collect()
    }

    pub fn trainable_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::trainable_count).sum()
    }

    /// Run the chain with parameters looked up in `params` by name.
    pub fn forward<'g>(
        &self,
        params: &crate::params::Bound<'g>,
        mut x: Var<'g>,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<Var<'g>> {
        for (i, layer) in self.layers.iter().enumerate() {
            let names: Vec<String> = layer
                .param_suffixes()
                .iter()
                .map(|s| format!("{}.{i}.{s}", self.prefix))
                .collect();
            let vars = names
                .iter()
                .map(|n| params.get(n))
                .collect::<Result<Vec<_>>>()?;
            let out = layer_forward(layer, &vars, x, mode, rng)?;
            if let Some(stats) = out.batch_stats {
                params.record_stats(&names[2], &names[3], stats);
            }
            x = out.output;
        }
        Ok(x)
    }
}

/// Convenience for single-graph experiments: a layer's freshly initialized
/// parameters bound as trainable leaves.
pub fn bind_layer<'g>(graph: &'g Graph, spec: &LayerSpec, rng: &mut Rng) -> Vec<Var<'g>> {
    spec.init(rng)
        .into_iter()
        .zip(spec.param_suffixes())
        .map(|(t, s)| {
            if s.starts_with("running") {
                graph.constant(t)
            } else {
                graph.param(t)
            }
        })
        .collect()
}
