use std::path::{Path, PathBuf};

use clap::Args;
use csigan::data::{load_csi, save_csi, split, NormParams};
use csigan::models::{
    save_checkpoint, Checkpoint, CriticSpec, DiscriminatorSpec, GeneratorSpec, HiddenActivation, ModelSpec,
};
use csigan::training::{
    train_cgan_bce, train_cwgan_with, EpochUnit, LossKind, Snapshot, TrainConfig, TrainLog, TrainOutcome,
};

use crate::config::Settings;
use crate::{create_dir, svg, write_file, CliError, Common};

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// CSI4DATA training corpus.
    #[arg(long, value_name = "FILE")]
    data: Option<PathBuf>,
    /// `wgp` for the cWGAN-GP, `bce` for the conditional BCE baseline.
    #[arg(long)]
    loss: Option<String>,
    /// Training length in epochs (generator updates unless `train.epoch_unit = pass`).
    #[arg(long)]
    iters: Option<usize>,
}

/// Final/initial window of `|critic_loss|` is measured over this share of the log.
pub const WINDOW_FRACTION: f64 = 0.1;

enum Second {
    Critic(CriticSpec),
    Discriminator(DiscriminatorSpec),
}

pub fn run(a: TrainArgs, mut s: Settings) -> Result<(), CliError> {
    s.flag("data.path", a.data.as_ref().map(|p| p.display()));
    s.flag("train.loss", a.loss);
    s.flag("train.iters", a.iters);
    s.flag("train.seed", a.common.seed);

    let data_path: String = s.require("data.path", "--data")?;
    let train_on = s.choice("data.train_on", "split", &["split", "all"])?;
    let (ratio, stratified) = if train_on == "split" {
        (s.get("data.split_ratio", 0.75f64)?, s.get("data.stratified", true)?)
    } else {
        (1.0, false)
    };

    let d = TrainConfig::default();
    let loss = s.choice("train.loss", "wgp", &["wgp", "bce"])?;
    let loss_kind = if loss == "bce" { LossKind::Bce } else { LossKind::WassersteinGp };
    let epoch_unit = match s.choice("train.epoch_unit", "iteration", &["iteration", "pass"])?.as_str() {
        "pass" => EpochUnit::FullPass,
        _ => EpochUnit::Iteration,
    };
    let mut cfg = TrainConfig {
        epochs: s.get("train.iters", d.epochs)?,
        epoch_unit,
        seed: s.get("train.seed", d.seed)?,
        latent_dim: s.get("train.latent_dim", d.latent_dim)?,
        batch_size: s.get("train.batch_size", d.batch_size)?,
        learning_rate: s.get("train.lr", d.learning_rate)?,
        adam_betas: (s.get("train.beta1", d.adam_betas.0)?, s.get("train.beta2", d.adam_betas.1)?),
        adam_eps: s.get("train.adam_eps", d.adam_eps)?,
        save_every: s.get("train.save_every", d.save_every)?,
        save_per_class: s.get("train.save_per_class", d.save_per_class)?,
        loss_kind,
        ..d
    };
    match loss_kind {
        LossKind::WassersteinGp => {
            cfg.n_critic = s.get("train.n_critic", cfg.n_critic)?;
            cfg.lambda_gp = s.get("train.lambda_gp", cfg.lambda_gp)?;
        }
        LossKind::Bce => {
            cfg.saturating_gen_loss = s.get("train.saturating_gen_loss", false)?;
        }
    }
    cfg.record_wall_time = s.get("train.record_wall_time", false)?;
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let data = load_csi(&data_path)?;
    let (k, ant, time) = (data.num_classes(), data.antennas(), data.time());
    let mut gen = match loss_kind {
        LossKind::WassersteinGp => GeneratorSpec::wasserstein(cfg.latent_dim, k, ant, time),
        LossKind::Bce => GeneratorSpec::bce(cfg.latent_dim, k, ant, time),
    };
    gen.hidden = s.sizes("model.gen_hidden", gen.hidden)?;
    gen.embed_dim = s.get("model.embed_dim", k)?;
    if let HiddenActivation::LeakyRelu(slope) = gen.activation {
        gen.activation = HiddenActivation::LeakyRelu(s.get("model.gen_slope", slope)?);
    }
    let second = match loss_kind {
        LossKind::WassersteinGp => {
            let mut c = CriticSpec::new(ant * time, k);
            c.embed_dim = gen.embed_dim;
            c.hidden = s.sizes("model.critic_hidden", c.hidden)?;
            c.dropout_rate = s.get("model.dropout", c.dropout_rate)?;
            c.slope = s.get("model.critic_slope", c.slope)?;
            c.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            Second::Critic(c)
        }
        LossKind::Bce => {
            let mut c = DiscriminatorSpec::new(ant * time, k);
            c.embed_dim = gen.embed_dim;
            c.hidden = s.sizes("model.disc_hidden", c.hidden)?;
            c.slope = s.get("model.disc_slope", c.slope)?;
            c.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            Second::Discriminator(c)
        }
    };
    gen.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    s.finish()?;

    let real = if train_on == "split" {
        split(&data, ratio, cfg.seed, stratified)?.train
    } else {
        data
    };
    let train = if real.is_normalized() { real } else { real.normalize()? };
    let range = train.norm_params();

    let out = &a.common.out;
    create_dir(out)?;
    write_file(&out.join("config.toml"), s.snapshot())?;

    let mut save = |snap: &Snapshot| -> csigan::error::Result<()> {
        save_snapshot(out, snap, &gen, &second, range).map_err(|e| match e {
            CliError::Core(e) => e,
            other => csigan::error::Error::Io(std::io::Error::other(other.to_string())),
        })
    };
    let outcome = match &second {
        Second::Critic(c) => train_cwgan_with(&train, &gen, c, &cfg, &mut save)?,
        Second::Discriminator(c) => train_cgan_bce(&train, &gen, c, &cfg, &mut save)?,
    };
    finish_run(out, &outcome, loss_kind)
}

fn save_snapshot(
    out: &Path,
    snap: &Snapshot,
    gen: &GeneratorSpec,
    second: &Second,
    range: Option<NormParams>,
) -> Result<(), CliError> {
    let tag = format!("{:04}", snap.epoch);
    let g = Checkpoint::new(ModelSpec::Generator(gen.clone()), snap.generator.clone(), range)?;
    save_checkpoint(&g, out.join(format!("ckpt_{tag}.ckpt")))?;
    let spec = match second {
        Second::Critic(c) => ModelSpec::Critic(c.clone()),
        Second::Discriminator(c) => ModelSpec::Discriminator(c.clone()),
    };
    let c = Checkpoint::new(spec, snap.critic.clone(), range)?;
    save_checkpoint(&c, out.join(format!("critic_{tag}.ckpt")))?;
    save_csi(snap.samples, out.join(format!("samples_{tag}.csi4")))?;
    log::info!("saved epoch {} (iteration {})", snap.epoch, snap.iteration);
    Ok(())
}

/// Short verdict on a finished run, as printed and saved to `summary.txt`.
pub fn summary(log: &TrainLog, loss: LossKind) -> String {
    let last = log.records.last();
    let mut s = format!(
        "{} generator updates, {} {} updates",
        log.generator_updates,
        log.critic_updates,
        if loss == LossKind::Bce { "discriminator" } else { "critic" }
    );
    if let Some(r) = last {
        s.push_str(&format!("; final gen_loss {:.4} critic_loss {:.4}", r.gen_loss, r.critic_loss));
    }
    s.push('\n');
    match loss {
        LossKind::Bce => s.push_str(&log.bce_signature().summary_line()),
        LossKind::WassersteinGp => {
            let window = window_len(log.records.len());
            s.push_str(&format!(
                "critic |loss| final/initial window ratio {:.3} (window {window} iterations)",
                log.critic_window_ratio(window)
            ));
        }
    }
    s.push('\n');
    for w in &log.warnings {
        s.push_str(&format!("warning: {w}\n"));
    }
    s
}

pub fn window_len(records: usize) -> usize {
    ((records as f64 * WINDOW_FRACTION).round() as usize).max(1)
}

fn finish_run(out: &Path, outcome: &TrainOutcome, loss: LossKind) -> Result<(), CliError> {
    let log = &outcome.log;
    write_file(&out.join("log.csv"), log.to_csv())?;
    let series = |f: fn(&csigan::training::IterRecord) -> f32| -> Vec<(f64, f64)> {
        log.records.iter().map(|r| (r.iter as f64, f(r) as f64)).collect()
    };
    let chart = svg::line_chart(
        &format!("{} training losses", if loss == LossKind::Bce { "BCE cGAN" } else { "cWGAN-GP" }),
        "generator iteration",
        &[("gen_loss", series(|r| r.gen_loss)), ("critic_loss", series(|r| r.critic_loss))],
    );
    write_file(&out.join("losses.svg"), chart)?;
    let text = summary(log, loss);
    write_file(&out.join("summary.txt"), &text)?;
    print!("{text}");
    Ok(())
}
