//! WebAssembly bindings behind `www/index.html`.
//!
//! Three operations, each a plain Rust function (tested natively) with a thin
//! `wasm_bindgen` wrapper:
//! - `corpus_heatmap`: class mean and one sample of a synthetic desk corpus
//! - `penalty_grid`: gradient penalty of a linear critic over a weight grid
//! - `tiny_train`: a scaled-down cWGAN-GP trained in the page

use csigan::autodiff::layers::{LayerSpec, Mode, Sequential};
use csigan::autodiff::Graph;
use csigan::data::{synth_corpus, CsiBatch, SynthCorpusSpec};
use csigan::error::Result;
use csigan::models::{CriticSpec, GeneratorSpec};
use csigan::params::ModelParams;
use csigan::rng::Rng;
use csigan::tensor::Tensor;
use csigan::training::{generate_synthetic, gradient_penalty, train_cwgan, TrainConfig};
use wasm_bindgen::prelude::*;

pub const ANTENNAS: usize = 8;
pub const TIME: usize = 10;
pub const CLASSES: usize = 4;

fn js(e: csigan::error::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn class_mean(batch: &CsiBatch, class: usize) -> Vec<f32> {
    let mut mean = vec![0.0f32; batch.features()];
    let rows: Vec<usize> = (0..batch.len()).filter(|&i| batch.labels()[i] == class).collect();
    for &i in &rows {
        for (m, v) in mean.iter_mut().zip(batch.sample(i)) {
            *m += v;
        }
    }
    let n = rows.len().max(1) as f32;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

/// Class mean followed by the first sample of that class, each
/// `ANTENNAS x TIME` row-major.
pub fn heatmap(separation: f32, noise: f32, seed: u64, class: usize) -> Result<Vec<f32>> {
    let spec = SynthCorpusSpec {
        per_class: 50,
        class_separation: separation,
        noise_sigma: noise,
        seed,
        ..SynthCorpusSpec::desk()
    };
    spec.validate()?;
    let batch = synth_corpus(&spec)?;
    let class = class.min(CLASSES - 1);
    let first = (0..batch.len()).find(|&i| batch.labels()[i] == class).expect("balanced corpus");
    let mut out = class_mean(&batch, class);
    out.extend_from_slice(batch.sample(first));
    Ok(out)
}

#[wasm_bindgen]
pub fn corpus_heatmap(separation: f32, noise: f32, seed: u32, class: usize) -> std::result::Result<Vec<f32>, JsError> {
    heatmap(separation, noise, seed as u64, class).map_err(js)
}

/// Penalty `λ · mean((‖∇ₓ C‖ - 1)²)` of the critic `C(x) = w₁x₁ + w₂x₂`,
/// evaluated through the library's double-backward on a `steps x steps` grid
/// of weights spanning `[-span, span]²`. Row-major, first weight along rows.
pub fn penalty_values(span: f32, steps: usize, lambda: f32) -> Result<Vec<f32>> {
    let net = Sequential::new("c", vec![LayerSpec::Linear { in_features: 2, out_features: 1 }]);
    let x = Rng::stream(0, "web.penalty").normal_tensor(&[8, 2], 1.0);
    let at = |i: usize| -span + 2.0 * span * i as f32 / (steps.max(2) - 1) as f32;
    let mut out = Vec::with_capacity(steps * steps);
    for i in 0..steps {
        for j in 0..steps {
            let params = ModelParams::new(
                vec![
                    ("c.0.weight".into(), Tensor::new(&[2, 1], vec![at(i), at(j)])?),
                    ("c.0.bias".into(), Tensor::zeros(&[1])),
                ],
                0,
            )?;
            let g = Graph::second_order();
            let p = params.bind(&g, false);
            let xv = g.input(x.clone(), true);
            let mut rng = Rng::stream(0, "web.unused");
            let pen = gradient_penalty(xv, |x| net.forward(&p, x, Mode::Eval, &mut rng), lambda)?;
            out.push(pen.item());
        }
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn penalty_grid(span: f32, steps: usize, lambda: f32) -> std::result::Result<Vec<f32>, JsError> {
    penalty_values(span, steps, lambda).map_err(js)
}

/// Outcome of the in-page training run.
#[wasm_bindgen]
pub struct TinyRun {
    critic_loss: Vec<f32>,
    gen_loss: Vec<f32>,
    real: CsiBatch,
    fake: CsiBatch,
}

#[wasm_bindgen]
impl TinyRun {
    pub fn critic_losses(&self) -> Vec<f32> {
        self.critic_loss.clone()
    }

    pub fn gen_losses(&self) -> Vec<f32> {
        self.gen_loss.clone()
    }

    /// Mean real amplitude map of `class`, raw scale.
    pub fn real_mean(&self, class: usize) -> Vec<f32> {
        class_mean(&self.real, class)
    }

    /// Mean generated amplitude map of `class`, raw scale.
    pub fn fake_mean(&self, class: usize) -> Vec<f32> {
        class_mean(&self.fake, class)
    }

    /// One generated sample of `class`.
    pub fn fake_sample(&self, class: usize, index: usize) -> Vec<f32> {
        let rows: Vec<usize> = (0..self.fake.len()).filter(|&i| self.fake.labels()[i] == class).collect();
        rows.get(index % rows.len().max(1)).map(|&i| self.fake.sample(i).to_vec()).unwrap_or_default()
    }
}

/// Narrow networks and a 200-sample corpus so a run takes seconds in a
/// browser tab.
pub fn train_tiny(iters: usize, seed: u64) -> Result<TinyRun> {
    let real = synth_corpus(&SynthCorpusSpec { per_class: 50, seed, ..SynthCorpusSpec::desk() })?;
    let train = real.normalize()?;
    let mut gen = GeneratorSpec::wasserstein(16, CLASSES, ANTENNAS, TIME);
    gen.hidden = [32, 32, 64, 64];
    let mut critic = CriticSpec::new(ANTENNAS * TIME, CLASSES);
    critic.hidden = [64, 32];
    let cfg = TrainConfig {
        latent_dim: 16,
        epochs: iters.max(1),
        save_every: usize::MAX,
        seed,
        ..TrainConfig::default()
    };
    let outcome = train_cwgan(&train, &gen, &critic, &cfg)?;
    let fake = generate_synthetic(&gen, &outcome.generator, 50, seed, train.norm_params())?;
    let log = outcome.log.records;
    Ok(TinyRun {
        critic_loss: log.iter().map(|r| r.critic_loss).collect(),
        gen_loss: log.iter().map(|r| r.gen_loss).collect(),
        real,
        fake,
    })
}

#[wasm_bindgen]
pub fn tiny_train(iters: usize, seed: u32) -> std::result::Result<TinyRun, JsError> {
    train_tiny(iters, seed as u64).map_err(js)
}
