//! Adversarial losses, Adam, and the training loops.

mod classifier;
mod gan;
mod log;

use std::collections::BTreeMap;

use crate::autodiff::Var;
use crate::autodiff::layers::is_buffer;
use crate::error::{Error, Result};
use crate::params::{GradMap, ModelParams};
use crate::tensor::Tensor;

pub use classifier::{accuracy, predict, train_classifier, ClassifierOutcome, ClassifierTrainConfig};
pub use gan::{generate_synthetic, train_cgan_bce, train_cwgan, train_cwgan_with, Snapshot, TrainOutcome};
pub use log::{BceSignature, IterRecord, TrainLog, LOG_HEADER};

/// Probabilities are clamped to `[P_CLAMP, 1 - P_CLAMP]` before taking logs.
pub const P_CLAMP: f32 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    Bce,
    WassersteinGp,
}

impl LossKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Bce => "bce",
            LossKind::WassersteinGp => "wgp",
        }
    }
}

/// What one "epoch" of the schedule means.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EpochUnit {
    /// One generator update on one minibatch.
    Iteration,
    /// `ceil(m / batch_size)` generator updates.
    FullPass,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub latent_dim: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub adam_betas: (f32, f32),
    pub adam_eps: f32,
    pub lambda_gp: f32,
    pub n_critic: usize,
    pub epochs: usize,
    pub epoch_unit: EpochUnit,
    pub save_every: usize,
    /// Samples per class in each saved synthetic set.
    pub save_per_class: usize,
    pub seed: u64,
    pub loss_kind: LossKind,
    /// BCE only: minimize `log(1 - D(G(z)))` instead of `-log D(G(z))`.
    pub saturating_gen_loss: bool,
    /// Record wall-clock milliseconds per iteration (makes logs non-reproducible).
    pub record_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            latent_dim: 100,
            batch_size: 32,
            learning_rate: 3e-4,
            adam_betas: (0.5, 0.9),
            adam_eps: 1e-8,
            lambda_gp: 10.0,
            n_critic: 5,
            epochs: 2000,
            epoch_unit: EpochUnit::Iteration,
            save_every: 500,
            save_per_class: 200,
            seed: 0,
            loss_kind: LossKind::WassersteinGp,
            saturating_gen_loss: false,
            record_wall_time: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let (b1, b2) = self.adam_betas;
        let checks = [
            (self.n_critic >= 1, "n_critic must be >= 1"),
            (self.lambda_gp >= 0.0, "lambda_gp must be >= 0"),
            ((0.0..1.0).contains(&b1), "beta1 must lie in [0, 1)"),
            ((0.0..1.0).contains(&b2), "beta2 must lie in [0, 1)"),
            (self.save_every >= 1, "save_every must be >= 1"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.latent_dim >= 1, "latent_dim must be >= 1"),
            (self.learning_rate > 0.0 && self.learning_rate.is_finite(), "learning_rate must be positive"),
            (self.adam_eps > 0.0, "adam_eps must be positive"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::contract(*msg)),
            None => Ok(()),
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            beta1: self.adam_betas.0,
            beta2: self.adam_betas.1,
            eps: self.adam_eps,
        }
    }

    /// Generator updates making up one epoch for a dataset of `m` samples.
    pub fn updates_per_epoch(&self, m: usize) -> usize {
        match self.epoch_unit {
            EpochUnit::Iteration => 1,
            EpochUnit::FullPass => m.div_ceil(self.batch_size).max(1),
        }
    }
}

fn finite_or(v: Var<'_>, what: &str) -> Result<()> {
    if v.value_ref().all_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("{what} contains NaN or infinity")))
    }
}

/// Discriminator BCE: `-mean(log d_real) - mean(log(1 - d_fake))`.
pub fn bce_disc_loss<'g>(d_real: Var<'g>, d_fake: Var<'g>) -> Result<Var<'g>> {
    finite_or(d_real, "d_real")?;
    finite_or(d_fake, "d_fake")?;
    let real = d_real.clamp(P_CLAMP, 1.0 - P_CLAMP)?.ln().mean();
    let fake = d_fake.clamp(P_CLAMP, 1.0 - P_CLAMP)?.scale(-1.0).add_scalar(1.0).ln().mean();
    Ok(real.add(fake)?.scale(-1.0))
}

/// Generator BCE: `-mean(log d_fake)`, or `mean(log(1 - d_fake))` when `saturating`.
pub fn bce_gen_loss(d_fake: Var<'_>, saturating: bool) -> Result<Var<'_>> {
    finite_or(d_fake, "d_fake")?;
    let p = d_fake.clamp(P_CLAMP, 1.0 - P_CLAMP)?;
    Ok(if saturating {
        p.scale(-1.0).add_scalar(1.0).ln().mean()
    } else {
        p.ln().mean().scale(-1.0)
    })
}

/// `(d_loss, g_loss)` with the non-saturating generator loss.
pub fn bce_gan_losses<'g>(d_real: Var<'g>, d_fake: Var<'g>) -> Result<(Var<'g>, Var<'g>)> {
    Ok((bce_disc_loss(d_real, d_fake)?, bce_gen_loss(d_fake, false)?))
}

/// `(critic_loss, gen_loss) = (mean c_fake - mean c_real, -mean c_fake)`.
pub fn wloss<'g>(c_real: Var<'g>, c_fake: Var<'g>) -> Result<(Var<'g>, Var<'g>)> {
    finite_or(c_real, "c_real")?;
    finite_or(c_fake, "c_fake")?;
    let critic = c_fake.mean().sub(c_real.mean())?;
    Ok((critic, c_fake.mean().scale(-1.0)))
}

/// `eps·x_real + (1 - eps)·x_fake` with one `eps` per row.
pub fn interpolate(x_real: &Tensor, x_fake: &Tensor, eps: &Tensor) -> Result<Tensor> {
    if x_real.shape() != x_fake.shape() || x_real.rank() != 2 {
        return Err(Error::dim(format!(
            "interpolate needs equal [m, d] shapes, got {:?} and {:?}",
            x_real.shape(),
            x_fake.shape()
        )));
    }
    let m = x_real.rows();
    if eps.len() != m {
        return Err(Error::dim(format!("{} eps values for {m} rows", eps.len())));
    }
    if let Some(e) = eps.data().iter().find(|e| !(0.0..=1.0).contains(*e)) {
        return Err(Error::contract(format!("eps {e} outside [0, 1]")));
    }
    let d = x_real.row_len();
    let mut out = Vec::with_capacity(m * d);
    for i in 0..m {
        let e = eps.data()[i];
        out.extend(x_real.row(i).iter().zip(x_fake.row(i)).map(|(&r, &f)| e * r + (1.0 - e) * f));
    }
    Tensor::new(x_real.shape(), out)
}

/// Per-sample `‖∂C/∂x̂‖₂` as a differentiable `[m]` vector.
///
/// `scores` maps `x_hat` to one critic value per row. A tiny constant inside
/// the square root keeps the derivative finite at a zero gradient.
pub fn gradient_norms<'g>(
    x_hat: Var<'g>,
    scores: impl FnOnce(Var<'g>) -> Result<Var<'g>>,
) -> Result<Var<'g>> {
    if !x_hat.requires_grad() {
        return Err(Error::contract("x_hat must be an input that requires gradients"));
    }
    let graph = x_hat.graph();
    let out = scores(x_hat)?.sum();
    let g = graph.input_gradient(out, x_hat)?;
    let m = x_hat.shape()[0];
    Ok(g.reshape(&[m, x_hat.len() / m.max(1)])?
        .square()
        .sum_axis(1)?
        .add_scalar(1e-12)
        .sqrt())
}

/// `lambda · mean((‖∂C/∂x̂‖₂ - 1)²)`, differentiable with respect to the
/// critic's parameters. Needs a second-order graph.
pub fn gradient_penalty<'g>(
    x_hat: Var<'g>,
    scores: impl FnOnce(Var<'g>) -> Result<Var<'g>>,
    lambda: f32,
) -> Result<Var<'g>> {
    let norms = gradient_norms(x_hat, scores)?;
    Ok(norms.add_scalar(-1.0).square().mean().scale(lambda))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

/// First and second moments per trainable parameter plus the step count.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub t: u64,
    m: BTreeMap<String, Vec<f32>>,
    v: BTreeMap<String, Vec<f32>>,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn first_moment(&self, name: &str) -> Option<&[f32]> {
        self.m.get(name).map(Vec::as_slice)
    }

    pub fn second_moment(&self, name: &str) -> Option<&[f32]> {
        self.v.get(name).map(Vec::as_slice)
    }
}

/// One bias-corrected Adam update of every trainable tensor in `params`.
pub fn adam_step(state: &mut AdamState, params: &mut ModelParams, grads: &GradMap, cfg: &AdamConfig) -> Result<()> {
    for (name, t) in params.iter() {
        if is_buffer(name) {
            continue;
        }
        match grads.get(name) {
            None => return Err(Error::contract(format!("no gradient for parameter {name}"))),
            Some(g) if g.shape() != t.shape() => {
                return Err(Error::dim(format!(
                    "gradient for {name} has shape {:?}, parameter {:?}",
                    g.shape(),
                    t.shape()
                )))
            }
            _ => {}
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - (cfg.beta1 as f64).powi(t);
    let c2 = 1.0 - (cfg.beta2 as f64).powi(t);
    let step = (cfg.lr as f64 / c1) as f32;
    let c2_sqrt = c2.sqrt() as f32;
    for (name, p) in params.iter_mut() {
        if is_buffer(name) {
            continue;
        }
        let g = grads[name].data();
        let m = state.m.entry(name.to_string()).or_insert_with(|| vec![0.0; g.len()]);
        let v = state.v.entry(name.to_string()).or_insert_with(|| vec![0.0; g.len()]);
        for (((p, &g), m), v) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p -= step * *m / (v.sqrt() / c2_sqrt + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests;
