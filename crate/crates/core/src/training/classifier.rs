use super::{adam_step, AdamConfig, AdamState};
use crate::autodiff::layers::Mode;
use crate::autodiff::Graph;
use crate::data::CsiBatch;
use crate::error::{Error, Result};
use crate::models::{build_classifier, classifier_forward, classify, ClassifierSpec};
use crate::params::ModelParams;
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierTrainConfig {
    pub epochs: usize,
    pub learning_rate: f32,
    pub batch_size: usize,
    pub adam_betas: (f32, f32),
    pub seed: u64,
}

impl Default for ClassifierTrainConfig {
    fn default() -> Self {
        ClassifierTrainConfig {
            epochs: 30,
            learning_rate: 1e-3,
            batch_size: 32,
            adam_betas: (0.9, 0.999),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ClassifierOutcome {
    pub params: ModelParams,
    /// Mean cross entropy per epoch.
    pub epoch_losses: Vec<f32>,
    pub warnings: Vec<String>,
}

/// Softmax cross entropy with Adam over shuffled minibatches.
///
/// A trailing single-sample batch is dropped each epoch because batch
/// normalization cannot estimate a variance from one sample.
pub fn train_classifier(
    train: &CsiBatch,
    spec: &ClassifierSpec,
    cfg: &ClassifierTrainConfig,
) -> Result<ClassifierOutcome> {
    if train.is_empty() {
        return Err(Error::data("classifier training set is empty"));
    }
    if (train.antennas(), train.time(), train.num_classes()) != (spec.antennas, spec.time, spec.num_classes) {
        return Err(Error::dim(format!(
            "classifier expects {}x{} with {} classes, data is {}x{} with {}",
            spec.antennas,
            spec.time,
            spec.num_classes,
            train.antennas(),
            train.time(),
            train.num_classes()
        )));
    }
    if cfg.batch_size == 0 {
        return Err(Error::contract("batch_size must be >= 1"));
    }
    let mut warnings = Vec::new();
    let present = train.class_counts().iter().filter(|&&c| c > 0).count();
    if present < 2 {
        let msg = "training set contains a single class; the classifier cannot learn to discriminate".to_string();
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let mut params = build_classifier(spec, cfg.seed)?;
    let mut opt = AdamState::new();
    let adam = AdamConfig {
        lr: cfg.learning_rate,
        beta1: cfg.adam_betas.0,
        beta2: cfg.adam_betas.1,
        eps: 1e-8,
    };
    let images = train.as_images();
    let mut rng = Rng::stream(cfg.seed, "classifier.batches");
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let (mut total, mut batches) = (0.0f64, 0usize);
        for idx in order.chunks(cfg.batch_size) {
            if idx.len() < 2 && train.len() >= 2 {
                continue;
            }
            let x = images.select_rows(idx);
            let y: Vec<usize> = idx.iter().map(|&i| train.labels()[i]).collect();
            let g = Graph::first_order();
            let p = params.bind(&g, true);
            let logits = classifier_forward(spec, &p, g.constant(x), Mode::Train)?;
            let loss = logits.softmax_cross_entropy(&y)?;
            let value = loss.item();
            if !value.is_finite() {
                return Err(Error::Divergence {
                    iteration: epoch + 1,
                    what: format!("classifier loss is {value}"),
                });
            }
            total += value as f64;
            batches += 1;
            let grads = p.gradients(&g, loss)?;
            adam_step(&mut opt, &mut params, &grads, &adam)?;
            params.apply_batch_stats(p.take_stats())?;
        }
        epoch_losses.push((total / batches.max(1) as f64) as f32);
    }
    Ok(ClassifierOutcome { params, epoch_losses, warnings })
}

const PREDICT_CHUNK: usize = 256;

/// Eval-mode predictions in chunks, so large synthetic sets stay bounded in memory.
pub fn predict(spec: &ClassifierSpec, params: &ModelParams, data: &CsiBatch) -> Result<Vec<usize>> {
    let images = data.as_images();
    let mut out = Vec::with_capacity(data.len());
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(PREDICT_CHUNK) {
        out.extend(classify(spec, params, &images.select_rows(chunk))?);
    }
    Ok(out)
}

/// Fraction of `data` classified correctly.
pub fn accuracy(spec: &ClassifierSpec, params: &ModelParams, data: &CsiBatch) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::contract("accuracy of an empty set"));
    }
    let pred = predict(spec, params, data)?;
    let correct = pred.iter().zip(data.labels()).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / data.len() as f64)
}
