//! The cWGAN generator and critic, the BCE-cGAN discriminator and the CNN
//! pose classifier.
//!
//! Every network is an optional label-embedding table plus a [`Sequential`]
//! chain. Conditioning concatenates the embedded label to the generator's
//! noise vector or to the critic's flattened input.

mod checkpoint;

use crate::autodiff::layers::{Mode, Sequential, LayerSpec, DEFAULT_DROPOUT, DEFAULT_LEAKY_SLOPE};
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::params::{Bound, ModelParams};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub use checkpoint::{read_checkpoint, write_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, CKPT_MAGIC, CKPT_VERSION};

pub const EMBED_TABLE: &str = "embed.table";

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HiddenActivation {
    LeakyRelu(f32),
    Relu,
}

impl HiddenActivation {
    fn layer(self) -> LayerSpec {
        match self {
            HiddenActivation::LeakyRelu(slope) => LayerSpec::LeakyRelu { slope },
            HiddenActivation::Relu => LayerSpec::Relu,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorSpec {
    pub latent_dim: usize,
    pub num_classes: usize,
    pub embed_dim: usize,
    pub hidden: [usize; 4],
    pub antennas: usize,
    pub time: usize,
    pub activation: HiddenActivation,
    /// Batch normalization after every hidden linear layer (BCE variant only).
    pub batch_norm: bool,
}

impl GeneratorSpec {
    pub const DEFAULT_HIDDEN: [usize; 4] = [128, 256, 512, 1024];

    /// cWGAN generator: LeakyReLU hidden layers, no normalization, tanh output.
    pub fn wasserstein(latent_dim: usize, num_classes: usize, antennas: usize, time: usize) -> Self {
        GeneratorSpec {
            latent_dim,
            num_classes,
            embed_dim: num_classes,
            hidden: Self::DEFAULT_HIDDEN,
            antennas,
            time,
            activation: HiddenActivation::LeakyRelu(DEFAULT_LEAKY_SLOPE),
            batch_norm: false,
        }
    }

    /// BCE-cGAN generator: ReLU hidden layers with batch normalization.
    pub fn bce(latent_dim: usize, num_classes: usize, antennas: usize, time: usize) -> Self {
        GeneratorSpec {
            activation: HiddenActivation::Relu,
            batch_norm: true,
            ..Self::wasserstein(latent_dim, num_classes, antennas, time)
        }
    }

    pub fn out_features(&self) -> usize {
        self.antennas * self.time
    }

    pub fn network(&self) -> Sequential {
        let mut layers = Vec::new();
        let mut width = self.latent_dim + self.embed_dim;
        for &h in &self.hidden {
            layers.push(LayerSpec::Linear { in_features: width, out_features: h });
            if self.batch_norm {
                layers.push(LayerSpec::BatchNorm { channels: h });
            }
            layers.push(self.activation.layer());
            width = h;
        }
        layers.push(LayerSpec::Linear { in_features: width, out_features: self.out_features() });
        layers.push(LayerSpec::Tanh);
        Sequential::new("net", layers)
    }

    /// Closed-form count of trainable scalars.
    pub fn param_count(&self) -> usize {
        let mut total = self.num_classes * self.embed_dim;
        let mut width = self.latent_dim + self.embed_dim;
        for &h in &self.hidden {
            total += width * h + h;
            if self.batch_norm {
                total += 2 * h;
            }
            width = h;
        }
        total + width * self.out_features() + self.out_features()
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.num_classes == 0 || self.embed_dim == 0 {
            return Err(Error::contract("generator sizes must be positive"));
        }
        if self.out_features() == 0 {
            return Err(Error::contract("generator output must be non-empty"));
        }
        self.network().validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriticSpec {
    pub in_features: usize,
    pub num_classes: usize,
    pub embed_dim: usize,
    pub hidden: [usize; 2],
    pub dropout_rate: f32,
    pub slope: f32,
}

impl CriticSpec {
    pub const DEFAULT_HIDDEN: [usize; 2] = [512, 256];

    pub fn new(in_features: usize, num_classes: usize) -> Self {
        CriticSpec {
            in_features,
            num_classes,
            embed_dim: num_classes,
            hidden: Self::DEFAULT_HIDDEN,
            dropout_rate: DEFAULT_DROPOUT,
            slope: DEFAULT_LEAKY_SLOPE,
        }
    }

    /// linear → LeakyReLU → linear → LeakyReLU → dropout → linear, no output activation.
    pub fn network(&self) -> Sequential {
        let [h0, h1] = self.hidden;
        Sequential::new(
            "net",
            vec![
                LayerSpec::Linear { in_features: self.in_features + self.embed_dim, out_features: h0 },
                LayerSpec::LeakyRelu { slope: self.slope },
                LayerSpec::Linear { in_features: h0, out_features: h1 },
                LayerSpec::LeakyRelu { slope: self.slope },
                LayerSpec::Dropout { rate: self.dropout_rate },
                LayerSpec::Linear { in_features: h1, out_features: 1 },
            ],
        )
    }

    pub fn param_count(&self) -> usize {
        let [h0, h1] = self.hidden;
        self.num_classes * self.embed_dim
            + (self.in_features + self.embed_dim) * h0
            + h0
            + h0 * h1
            + h1
            + h1
            + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_features == 0 || self.num_classes == 0 || self.embed_dim == 0 {
            return Err(Error::contract("critic sizes must be positive"));
        }
        self.network().validate()
    }
}

/// Discriminator of the BCE baseline: five linear layers, batch norm on the
/// inner hidden layers, LeakyReLU, sigmoid output.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorSpec {
    pub in_features: usize,
    pub num_classes: usize,
    pub embed_dim: usize,
    pub hidden: [usize; 4],
    pub slope: f32,
}

impl DiscriminatorSpec {
    pub const DEFAULT_HIDDEN: [usize; 4] = [512, 256, 128, 64];

    pub fn new(in_features: usize, num_classes: usize) -> Self {
        DiscriminatorSpec {
            in_features,
            num_classes,
            embed_dim: num_classes,
            hidden: Self::DEFAULT_HIDDEN,
            slope: DEFAULT_LEAKY_SLOPE,
        }
    }

    pub fn network(&self) -> Sequential {
        let mut layers = Vec::new();
        let mut width = self.in_features + self.embed_dim;
        for (i, &h) in self.hidden.iter().enumerate() {
            layers.push(LayerSpec::Linear { in_features: width, out_features: h });
            if i > 0 {
                layers.push(LayerSpec::BatchNorm { channels: h });
            }
            layers.push(LayerSpec::LeakyRelu { slope: self.slope });
            width = h;
        }
        layers.push(LayerSpec::Linear { in_features: width, out_features: 1 });
        layers.push(LayerSpec::Sigmoid);
        Sequential::new("net", layers)
    }

    pub fn param_count(&self) -> usize {
        let mut total = self.num_classes * self.embed_dim;
        let mut width = self.in_features + self.embed_dim;
        for (i, &h) in self.hidden.iter().enumerate() {
            total += width * h + h;
            if i > 0 {
                total += 2 * h;
            }
            width = h;
        }
        total + width + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_features == 0 || self.num_classes == 0 || self.embed_dim == 0 {
            return Err(Error::contract("discriminator sizes must be positive"));
        }
        self.network().validate()
    }
}

/// Three conv → batch norm → ReLU → max-pool blocks and a linear head over
/// one-channel `antennas × time` images.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierSpec {
    pub antennas: usize,
    pub time: usize,
    pub conv_channels: [usize; 3],
    pub num_classes: usize,
    pub kernel: usize,
    pub padding: usize,
    pub pool: usize,
}

impl ClassifierSpec {
    pub const DEFAULT_CHANNELS: [usize; 3] = [16, 32, 64];

    pub fn new(antennas: usize, time: usize, num_classes: usize) -> Self {
        ClassifierSpec {
            antennas,
            time,
            conv_channels: Self::DEFAULT_CHANNELS,
            num_classes,
            kernel: 3,
            padding: 1,
            pool: 2,
        }
    }

    /// Spatial size after each block, or `None` when a block cannot be applied.
    fn block_sizes(&self) -> Option<Vec<(usize, usize)>> {
        let (mut h, mut w) = (self.antennas, self.time);
        let mut sizes = Vec::new();
        for _ in 0..3 {
            h = (h + 2 * self.padding).checked_sub(self.kernel)? + 1;
            w = (w + 2 * self.padding).checked_sub(self.kernel)? + 1;
            if h < self.pool || w < self.pool {
                return None;
            }
            h = (h - self.pool) / self.pool + 1;
            w = (w - self.pool) / self.pool + 1;
            sizes.push((h, w));
        }
        Some(sizes)
    }

    fn head_inputs(&self) -> usize {
        match self.block_sizes().as_deref() {
            Some([.., (h, w)]) => self.conv_channels[2] * h * w,
            _ => 0,
        }
    }

    pub fn network(&self) -> Sequential {
        let mut layers = Vec::new();
        let mut ch = 1;
        for &out in &self.conv_channels {
            layers.push(LayerSpec::Conv2d {
                in_channels: ch,
                out_channels: out,
                kernel: self.kernel,
                stride: 1,
                padding: self.padding,
            });
            layers.push(LayerSpec::BatchNorm { channels: out });
            layers.push(LayerSpec::Relu);
            layers.push(LayerSpec::MaxPool2d { size: self.pool, stride: self.pool });
            ch = out;
        }
        layers.push(LayerSpec::Flatten);
        layers.push(LayerSpec::Linear {
            in_features: self.head_inputs().max(1),
            out_features: self.num_classes,
        });
        Sequential::new("net", layers)
    }

    pub fn param_count(&self) -> usize {
        let mut total = 0;
        let mut ch = 1;
        for &out in &self.conv_channels {
            total += out * ch * self.kernel * self.kernel + out + 2 * out;
            ch = out;
        }
        total + self.head_inputs() * self.num_classes + self.num_classes
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(Error::contract("classifier needs at least one class"));
        }
        if self.block_sizes().is_none() {
            return Err(Error::dim(format!(
                "{}x{} input is too small for three conv/pool blocks",
                self.antennas, self.time
            )));
        }
        self.network().validate()
    }
}

/// Any of the four networks; the tag used in checkpoints.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelSpec {
    Generator(GeneratorSpec),
    Critic(CriticSpec),
    Discriminator(DiscriminatorSpec),
    Classifier(ClassifierSpec),
}

impl ModelSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelSpec::Generator(_) => "generator",
            ModelSpec::Critic(_) => "critic",
            ModelSpec::Discriminator(_) => "discriminator",
            ModelSpec::Classifier(_) => "classifier",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Generator(s) => s.validate(),
            ModelSpec::Critic(s) => s.validate(),
            ModelSpec::Discriminator(s) => s.validate(),
            ModelSpec::Classifier(s) => s.validate(),
        }
    }

    fn embedding(&self) -> Option<(usize, usize)> {
        match self {
            ModelSpec::Generator(s) => Some((s.num_classes, s.embed_dim)),
            ModelSpec::Critic(s) => Some((s.num_classes, s.embed_dim)),
            ModelSpec::Discriminator(s) => Some((s.num_classes, s.embed_dim)),
            ModelSpec::Classifier(_) => None,
        }
    }

    pub fn network(&self) -> Sequential {
        match self {
            ModelSpec::Generator(s) => s.network(),
            ModelSpec::Critic(s) => s.network(),
            ModelSpec::Discriminator(s) => s.network(),
            ModelSpec::Classifier(s) => s.network(),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            ModelSpec::Generator(s) => s.param_count(),
            ModelSpec::Critic(s) => s.param_count(),
            ModelSpec::Discriminator(s) => s.param_count(),
            ModelSpec::Classifier(s) => s.param_count(),
        }
    }

    /// Parameter names and shapes in storage order.
    pub fn layout(&self, seed: u64) -> Result<Vec<(String, Vec<usize>)>> {
        Ok(self
            .build(seed)?
            .iter()
            .map(|(n, t)| (n.to_string(), t.shape().to_vec()))
            .collect())
    }

    /// Freshly initialized parameters; deterministic in `seed`.
    pub fn build(&self, seed: u64) -> Result<ModelParams> {
        self.validate()?;
        let mut rng = Rng::stream(seed, &format!("init.{}", self.kind()));
        let mut entries = Vec::new();
        if let Some((num, dim)) = self.embedding() {
            let table = LayerSpec::Embedding { num, dim }.init(&mut rng).remove(0);
            entries.push((EMBED_TABLE.to_string(), table));
        }
        entries.extend(self.network().init(&mut rng));
        ModelParams::new(entries, seed)
    }
}

pub fn build_generator(spec: &GeneratorSpec, seed: u64) -> Result<ModelParams> {
    ModelSpec::Generator(spec.clone()).build(seed)
}

pub fn build_critic(spec: &CriticSpec, seed: u64) -> Result<ModelParams> {
    ModelSpec::Critic(spec.clone()).build(seed)
}

pub fn build_discriminator_bce(spec: &DiscriminatorSpec, seed: u64) -> Result<ModelParams> {
    ModelSpec::Discriminator(spec.clone()).build(seed)
}

pub fn build_classifier(spec: &ClassifierSpec, seed: u64) -> Result<ModelParams> {
    ModelSpec::Classifier(spec.clone()).build(seed)
}

fn check_labels(labels: &[usize], rows: usize, num_classes: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::dim(format!("{} labels for {rows} rows", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::data(format!(
            "label {bad} out of range for {num_classes} classes"
        )));
    }
    Ok(())
}

fn conditioned<'g>(p: &Bound<'g>, x: Var<'g>, labels: &[usize], num_classes: usize) -> Result<Var<'g>> {
    check_labels(labels, x.shape()[0], num_classes)?;
    let emb = p.get(EMBED_TABLE)?.gather_rows(labels)?;
    x.concat_cols(emb)
}

/// `G(z, y)`: `[m, latent]` noise and `m` labels to `[m, antennas·time]` in `[-1, 1]`.
pub fn generator_forward<'g>(
    spec: &GeneratorSpec,
    p: &Bound<'g>,
    z: Var<'g>,
    labels: &[usize],
    mode: Mode,
    rng: &mut Rng,
) -> Result<Var<'g>> {
    let shape = z.shape();
    if shape.len() != 2 || shape[1] != spec.latent_dim {
        return Err(Error::dim(format!(
            "generator expects [m, {}] noise, got {shape:?}",
            spec.latent_dim
        )));
    }
    let h = conditioned(p, z, labels, spec.num_classes)?;
    spec.network().forward(p, h, mode, rng)
}

/// `C(x, y)`: one unbounded score per sample, `[m, 1]`.
pub fn critic_forward<'g>(
    spec: &CriticSpec,
    p: &Bound<'g>,
    x: Var<'g>,
    labels: &[usize],
    mode: Mode,
    rng: &mut Rng,
) -> Result<Var<'g>> {
    let shape = x.shape();
    if shape.len() != 2 || shape[1] != spec.in_features {
        return Err(Error::dim(format!(
            "critic expects [m, {}] input, got {shape:?}",
            spec.in_features
        )));
    }
    let h = conditioned(p, x, labels, spec.num_classes)?;
    spec.network().forward(p, h, mode, rng)
}

/// `D(x, y)`: probability of being real, `[m, 1]` in `(0, 1)`.
pub fn discriminator_forward<'g>(
    spec: &DiscriminatorSpec,
    p: &Bound<'g>,
    x: Var<'g>,
    labels: &[usize],
    mode: Mode,
    rng: &mut Rng,
) -> Result<Var<'g>> {
    let shape = x.shape();
    if shape.len() != 2 || shape[1] != spec.in_features {
        return Err(Error::dim(format!(
            "discriminator expects [m, {}] input, got {shape:?}",
            spec.in_features
        )));
    }
    let h = conditioned(p, x, labels, spec.num_classes)?;
    spec.network().forward(p, h, mode, rng)
}

/// Class logits `[m, K]` for `[m, 1, antennas, time]` input.
pub fn classifier_forward<'g>(
    spec: &ClassifierSpec,
    p: &Bound<'g>,
    x: Var<'g>,
    mode: Mode,
) -> Result<Var<'g>> {
    let shape = x.shape();
    if shape.len() != 4 || shape[1] != 1 || shape[2] != spec.antennas || shape[3] != spec.time {
        return Err(Error::dim(format!(
            "classifier expects [m, 1, {}, {}], got {shape:?}",
            spec.antennas, spec.time
        )));
    }
    // the classifier has no dropout; the stream is never drawn from
    let mut rng = Rng::stream(0, "classifier.unused");
    spec.network().forward(p, x, mode, &mut rng)
}

/// Eval-mode generator output as a plain tensor.
pub fn generate(spec: &GeneratorSpec, params: &ModelParams, z: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let g = Graph::first_order();
    let p = params.bind(&g, false);
    let mut rng = Rng::stream(0, "generate.unused");
    let out = generator_forward(spec, &p, g.constant(z.clone()), labels, Mode::Eval, &mut rng)?;
    let v = out.value();
    Ok((*v).clone())
}

/// Eval-mode critic scores as a plain tensor.
pub fn critic_scores(spec: &CriticSpec, params: &ModelParams, x: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let g = Graph::first_order();
    let p = params.bind(&g, false);
    let mut rng = Rng::stream(0, "critic.unused");
    let out = critic_forward(spec, &p, g.constant(x.clone()), labels, Mode::Eval, &mut rng)?;
    let v = out.value();
    Ok((*v).clone())
}

/// Eval-mode class predictions.
pub fn classify(spec: &ClassifierSpec, params: &ModelParams, images: &Tensor) -> Result<Vec<usize>> {
    let g = Graph::first_order();
    let p = params.bind(&g, false);
    let logits = classifier_forward(spec, &p, g.constant(images.clone()), Mode::Eval)?;
    let v = logits.value();
    Ok(v.argmax_rows())
}
