//! The BCE-cGAN and cWGAN-GP loops.

use std::time::Instant;

use super::{
    adam_step, bce_disc_loss, bce_gen_loss, gradient_penalty, interpolate, wloss, AdamState, IterRecord,
    LossKind, TrainConfig, TrainLog,
};
use crate::autodiff::layers::Mode;
use crate::autodiff::{Graph, Var};
use crate::data::{CsiBatch, NormParams, Source};
use crate::error::{Error, Result};
use crate::models::{
    build_critic, build_discriminator_bce, build_generator, critic_forward, discriminator_forward, generate,
    generator_forward, CriticSpec, DiscriminatorSpec, GeneratorSpec,
};
use crate::params::{ModelParams, StatsUpdate};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// State handed to the save callback every `save_every` epochs.
pub struct Snapshot<'a> {
    pub epoch: usize,
    pub iteration: usize,
    pub generator: &'a ModelParams,
    /// The critic (cWGAN) or discriminator (BCE).
    pub critic: &'a ModelParams,
    /// Denormalized synthetic samples, `save_per_class` per class.
    pub samples: &'a CsiBatch,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub generator: ModelParams,
    pub critic: ModelParams,
    pub log: TrainLog,
    /// `(epoch, samples)` for every save point.
    pub saved: Vec<(usize, CsiBatch)>,
}

/// Reshuffled passes over the dataset; a pass ends when fewer than one
/// batch of unseen samples remains.
struct Batches {
    order: Vec<usize>,
    pos: usize,
    size: usize,
    rng: Rng,
}

impl Batches {
    fn new(m: usize, size: usize, rng: Rng) -> Self {
        Batches {
            order: (0..m).collect(),
            pos: m,
            size: size.min(m),
            rng,
        }
    }

    fn next(&mut self) -> &[usize] {
        if self.pos + self.size > self.order.len() {
            self.rng.shuffle(&mut self.order);
            self.pos = 0;
        }
        self.pos += self.size;
        &self.order[self.pos - self.size..self.pos]
    }
}

fn check_inputs(data: &CsiBatch, gen: &GeneratorSpec, disc_in: usize, disc_k: usize, cfg: &TrainConfig) -> Result<()> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::data("training set is empty"));
    }
    if !data.is_normalized() {
        return Err(Error::contract("training data must be normalized to [-1, 1]"));
    }
    let d = data.features();
    let k = data.num_classes();
    if gen.out_features() != d || disc_in != d {
        return Err(Error::dim(format!(
            "networks expect {} / {disc_in} features, data has {d}",
            gen.out_features()
        )));
    }
    if gen.num_classes != k || disc_k != k {
        return Err(Error::dim(format!(
            "networks expect {} / {disc_k} classes, data has {k}",
            gen.num_classes
        )));
    }
    if gen.latent_dim != cfg.latent_dim {
        return Err(Error::contract(format!(
            "generator latent size {} differs from config {}",
            gen.latent_dim, cfg.latent_dim
        )));
    }
    Ok(())
}

fn diverged(iteration: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Numeric(what) => Error::Divergence { iteration, what },
        other => other,
    }
}

fn finite(v: Var<'_>, iteration: usize, what: &str) -> Result<f32> {
    let x = v.item();
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Divergence { iteration, what: format!("{what} is {x}") })
    }
}

fn uniform_labels(rng: &mut Rng, n: usize, k: usize) -> Vec<usize> {
    (0..n).map(|_| rng.below(k)).collect()
}

/// Train-mode generator output without gradients, plus any batch statistics.
fn sample_fake(
    spec: &GeneratorSpec,
    params: &ModelParams,
    z: Tensor,
    labels: &[usize],
    rng: &mut Rng,
) -> Result<(Tensor, Vec<StatsUpdate>)> {
    let g = Graph::first_order();
    let p = params.bind(&g, false);
    let out = generator_forward(spec, &p, g.constant(z), labels, Mode::Train, rng)?;
    let v = out.value();
    Ok(((*v).clone(), p.take_stats()))
}

struct Streams {
    batches: Batches,
    noise: Rng,
    eps: Rng,
    dropout: Rng,
    labels: Rng,
}

impl Streams {
    fn new(seed: u64, m: usize, batch: usize) -> Self {
        Streams {
            batches: Batches::new(m, batch, Rng::stream(seed, "train.batches")),
            noise: Rng::stream(seed, "train.noise"),
            eps: Rng::stream(seed, "train.eps"),
            dropout: Rng::stream(seed, "train.dropout"),
            labels: Rng::stream(seed, "train.labels"),
        }
    }
}

/// cWGAN-GP with the default no-op save callback.
pub fn train_cwgan(
    data: &CsiBatch,
    gen_spec: &GeneratorSpec,
    critic_spec: &CriticSpec,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_cwgan_with(data, gen_spec, critic_spec, cfg, &mut |_| Ok(()))
}

/// cWGAN-GP: `n_critic` critic updates on `wloss + penalty` per generator
/// update on `-mean C(G(z), y)`. Deterministic in `cfg.seed`.
pub fn train_cwgan_with(
    data: &CsiBatch,
    gen_spec: &GeneratorSpec,
    critic_spec: &CriticSpec,
    cfg: &TrainConfig,
    on_save: &mut dyn FnMut(&Snapshot) -> Result<()>,
) -> Result<TrainOutcome> {
    if cfg.loss_kind != LossKind::WassersteinGp {
        return Err(Error::contract("train_cwgan needs loss_kind = wasserstein_gp"));
    }
    check_inputs(data, gen_spec, critic_spec.in_features, critic_spec.num_classes, cfg)?;
    let mut gen = build_generator(gen_spec, cfg.seed)?;
    let mut critic = build_critic(critic_spec, cfg.seed)?;
    let (mut gen_opt, mut critic_opt) = (AdamState::new(), AdamState::new());
    let adam = cfg.adam();
    let flat = data.flat();
    let k = data.num_classes();
    let mut s = Streams::new(cfg.seed, data.len(), cfg.batch_size);
    let per_epoch = cfg.updates_per_epoch(data.len());
    let total = cfg.epochs * per_epoch;
    let mut log = TrainLog::default();
    let mut saved = Vec::new();

    for it in 1..=total {
        let start = cfg.record_wall_time.then(Instant::now);
        let (mut critic_sum, mut gp_sum) = (0.0f64, 0.0f64);
        for _ in 0..cfg.n_critic {
            let idx = s.batches.next().to_vec();
            let b = idx.len();
            let x_real = flat.select_rows(&idx);
            let y: Vec<usize> = idx.iter().map(|&i| data.labels()[i]).collect();
            let z = s.noise.normal_tensor(&[b, cfg.latent_dim], 1.0);
            let (x_fake, _) = sample_fake(gen_spec, &gen, z, &y, &mut s.dropout)?;
            let eps = s.eps.uniform_tensor(&[b, 1], 0.0, 1.0);
            let x_hat = interpolate(&x_real, &x_fake, &eps)?;

            let g = Graph::second_order();
            let p = critic.bind(&g, true);
            let c_real = critic_forward(critic_spec, &p, g.constant(x_real), &y, Mode::Train, &mut s.dropout)?;
            let c_fake = critic_forward(critic_spec, &p, g.constant(x_fake), &y, Mode::Train, &mut s.dropout)?;
            let (critic_loss, _) = wloss(c_real, c_fake).map_err(diverged(it))?;
            let loss = if cfg.lambda_gp > 0.0 {
                let dropout = &mut s.dropout;
                let gp = gradient_penalty(
                    g.input(x_hat, true),
                    |x| critic_forward(critic_spec, &p, x, &y, Mode::Train, dropout),
                    cfg.lambda_gp,
                )?;
                gp_sum += finite(gp, it, "gradient penalty")? as f64;
                critic_loss.add(gp)?
            } else {
                critic_loss
            };
            critic_sum += finite(critic_loss, it, "critic loss")? as f64;
            finite(loss, it, "critic objective")?;
            let grads = p.gradients(&g, loss)?;
            adam_step(&mut critic_opt, &mut critic, &grads, &adam)?;
            log.critic_updates += 1;
        }

        let b = cfg.batch_size.min(data.len());
        let y = uniform_labels(&mut s.labels, b, k);
        let z = s.noise.normal_tensor(&[b, cfg.latent_dim], 1.0);
        let g = Graph::first_order();
        let pg = gen.bind(&g, true);
        let pc = critic.bind(&g, false);
        let fake = generator_forward(gen_spec, &pg, g.constant(z), &y, Mode::Train, &mut s.dropout)?;
        let scores = critic_forward(critic_spec, &pc, fake, &y, Mode::Train, &mut s.dropout)?;
        let (_, gen_loss) = wloss(scores, scores).map_err(diverged(it))?;
        let gen_value = finite(gen_loss, it, "generator loss")?;
        let grads = pg.gradients(&g, gen_loss)?;
        adam_step(&mut gen_opt, &mut gen, &grads, &adam)?;
        log.generator_updates += 1;

        log.records.push(IterRecord {
            iter: it,
            gen_loss: gen_value,
            critic_loss: (critic_sum / cfg.n_critic as f64) as f32,
            grad_penalty: Some((gp_sum / cfg.n_critic as f64) as f32),
            disc_acc: None,
            wall_ms: start.map(|t| t.elapsed().as_millis() as u64),
        });
        if !gen.all_finite() || !critic.all_finite() {
            return Err(Error::Divergence { iteration: it, what: "non-finite parameters".into() });
        }
        maybe_save(it, per_epoch, cfg, gen_spec, &gen, &critic, data.norm_params(), &mut saved, on_save)?;
    }
    Ok(TrainOutcome { generator: gen, critic, log, saved })
}

#[allow(clippy::too_many_arguments)]
fn maybe_save(
    it: usize,
    per_epoch: usize,
    cfg: &TrainConfig,
    gen_spec: &GeneratorSpec,
    gen: &ModelParams,
    critic: &ModelParams,
    range: Option<NormParams>,
    saved: &mut Vec<(usize, CsiBatch)>,
    on_save: &mut dyn FnMut(&Snapshot) -> Result<()>,
) -> Result<()> {
    if it % per_epoch != 0 || (it / per_epoch) % cfg.save_every != 0 {
        return Ok(());
    }
    let epoch = it / per_epoch;
    let samples = generate_synthetic(gen_spec, gen, cfg.save_per_class, cfg.seed.wrapping_add(epoch as u64), range)?;
    on_save(&Snapshot {
        epoch,
        iteration: it,
        generator: gen,
        critic,
        samples: &samples,
    })?;
    saved.push((epoch, samples));
    Ok(())
}

fn disc_accuracy(d_real: &Tensor, d_fake: &Tensor) -> f32 {
    let correct = d_real.data().iter().filter(|&&p| p > 0.5).count() + d_fake.data().iter().filter(|&&p| p < 0.5).count();
    correct as f32 / (d_real.len() + d_fake.len()) as f32
}

/// BCE-cGAN baseline: one discriminator and one generator update per
/// iteration, discriminator accuracy logged at threshold 0.5.
pub fn train_cgan_bce(
    data: &CsiBatch,
    gen_spec: &GeneratorSpec,
    disc_spec: &DiscriminatorSpec,
    cfg: &TrainConfig,
    on_save: &mut dyn FnMut(&Snapshot) -> Result<()>,
) -> Result<TrainOutcome> {
    if cfg.loss_kind != LossKind::Bce {
        return Err(Error::contract("train_cgan_bce needs loss_kind = bce"));
    }
    check_inputs(data, gen_spec, disc_spec.in_features, disc_spec.num_classes, cfg)?;
    let mut gen = build_generator(gen_spec, cfg.seed)?;
    let mut disc = build_discriminator_bce(disc_spec, cfg.seed)?;
    let (mut gen_opt, mut disc_opt) = (AdamState::new(), AdamState::new());
    let adam = cfg.adam();
    let flat = data.flat();
    let k = data.num_classes();
    let mut s = Streams::new(cfg.seed, data.len(), cfg.batch_size);
    let per_epoch = cfg.updates_per_epoch(data.len());
    let total = cfg.epochs * per_epoch;
    let mut log = TrainLog::default();
    let mut saved = Vec::new();

    for it in 1..=total {
        let start = cfg.record_wall_time.then(Instant::now);
        let idx = s.batches.next().to_vec();
        let b = idx.len();
        let x_real = flat.select_rows(&idx);
        let y: Vec<usize> = idx.iter().map(|&i| data.labels()[i]).collect();
        let z = s.noise.normal_tensor(&[b, cfg.latent_dim], 1.0);
        let (x_fake, gen_stats) = sample_fake(gen_spec, &gen, z, &y, &mut s.dropout)?;
        gen.apply_batch_stats(gen_stats)?;

        let g = Graph::first_order();
        let p = disc.bind(&g, true);
        let d_real = discriminator_forward(disc_spec, &p, g.constant(x_real), &y, Mode::Train, &mut s.dropout)?;
        let d_fake = discriminator_forward(disc_spec, &p, g.constant(x_fake), &y, Mode::Train, &mut s.dropout)?;
        let acc = disc_accuracy(&d_real.value(), &d_fake.value());
        let d_loss = bce_disc_loss(d_real, d_fake).map_err(diverged(it))?;
        let d_value = finite(d_loss, it, "discriminator loss")?;
        let grads = p.gradients(&g, d_loss)?;
        adam_step(&mut disc_opt, &mut disc, &grads, &adam)?;
        disc.apply_batch_stats(p.take_stats())?;
        log.critic_updates += 1;

        let y = uniform_labels(&mut s.labels, b, k);
        let z = s.noise.normal_tensor(&[b, cfg.latent_dim], 1.0);
        let g = Graph::first_order();
        let pg = gen.bind(&g, true);
        let pd = disc.bind(&g, false);
        let fake = generator_forward(gen_spec, &pg, g.constant(z), &y, Mode::Train, &mut s.dropout)?;
        let d = discriminator_forward(disc_spec, &pd, fake, &y, Mode::Train, &mut s.dropout)?;
        let gen_loss = bce_gen_loss(d, cfg.saturating_gen_loss).map_err(diverged(it))?;
        let gen_value = finite(gen_loss, it, "generator loss")?;
        let grads = pg.gradients(&g, gen_loss)?;
        adam_step(&mut gen_opt, &mut gen, &grads, &adam)?;
        gen.apply_batch_stats(pg.take_stats())?;
        disc.apply_batch_stats(pd.take_stats())?;
        log.generator_updates += 1;

        log.records.push(IterRecord {
            iter: it,
            gen_loss: gen_value,
            critic_loss: d_value,
            grad_penalty: None,
            disc_acc: Some(acc),
            wall_ms: start.map(|t| t.elapsed().as_millis() as u64),
        });
        if !gen.all_finite() || !disc.all_finite() {
            return Err(Error::Divergence { iteration: it, what: "non-finite parameters".into() });
        }
        maybe_save(it, per_epoch, cfg, gen_spec, &gen, &disc, data.norm_params(), &mut saved, on_save)?;
    }
    Ok(TrainOutcome { generator: gen, critic: disc, log, saved })
}

const GENERATE_CHUNK: usize = 512;

/// `per_class` eval-mode samples of every class, labels cycling `0..K`.
///
/// With a `range` the output is mapped back to amplitude units; without
/// one it stays in the generator's `[-1, 1]` scale.
pub fn generate_synthetic(
    spec: &GeneratorSpec,
    params: &ModelParams,
    per_class: usize,
    seed: u64,
    range: Option<NormParams>,
) -> Result<CsiBatch> {
    spec.validate()?;
    let k = spec.num_classes;
    let total = per_class * k;
    if total == 0 {
        return Ok(CsiBatch::empty(spec.antennas, spec.time, k).with_source(Source::Synthetic));
    }
    let labels: Vec<usize> = (0..total).map(|i| i % k).collect();
    let mut rng = Rng::stream(seed, "generate");
    let mut data = Vec::with_capacity(total * spec.out_features());
    for chunk in labels.chunks(GENERATE_CHUNK) {
        let z = rng.normal_tensor(&[chunk.len(), spec.latent_dim], 1.0);
        data.extend(generate(spec, params, &z, chunk)?.into_data());
    }
    let amplitudes = Tensor::new(&[total, spec.antennas, spec.time], data)?;
    let batch = CsiBatch::new(amplitudes, labels, k)?.with_source(Source::Synthetic);
    match range {
        Some(r) => batch.with_norm(Some(r)).denormalize(),
        None => Ok(batch),
    }
}
