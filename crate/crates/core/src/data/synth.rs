//! Deterministic stand-in corpus for tests and demos.
//!
//! Each class owns a smooth template over the antenna × time grid: a coarse
//! grid of random knots, bilinearly interpolated and scaled by the class
//! separation, added to a base pattern shared by all classes. Samples are the
//! template plus i.i.d. Gaussian noise. Templates use only additions and
//! multiplications of seeded values, so the corpus is reproducible bit for bit.

use super::CsiBatch;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

const KNOTS_ANTENNA: usize = 3;
const KNOTS_TIME: usize = 4;
const BASE_LEVEL: f32 = 2.0;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthCorpusSpec {
    pub num_classes: usize,
    pub antennas: usize,
    pub time: usize,
    pub per_class: usize,
    pub class_separation: f32,
    pub noise_sigma: f32,
    pub seed: u64,
}

impl SynthCorpusSpec {
    /// Four classes on an 8 × 10 grid, 200 samples each.
    pub fn desk() -> Self {
        SynthCorpusSpec {
            num_classes: 4,
            antennas: 8,
            time: 10,
            per_class: 200,
            class_separation: 1.0,
            noise_sigma: 0.25,
            seed: 7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.antennas == 0 || self.time == 0 {
            return Err(Error::contract("corpus dimensions must be positive"));
        }
        if self.per_class == 0 {
            return Err(Error::contract("per_class must be at least 1"));
        }
        if !(self.noise_sigma >= 0.0) || !self.class_separation.is_finite() {
            return Err(Error::contract("noise_sigma must be >= 0 and separation finite"));
        }
        if self.num_classes > u16::MAX as usize
            || self.antennas > u16::MAX as usize
            || self.time > u16::MAX as usize
        {
            return Err(Error::contract("corpus dimensions exceed the container limits"));
        }
        Ok(())
    }
}

/// Knot values bilinearly interpolated onto the full grid.
fn smooth_pattern(knots: &[f32], antennas: usize, time: usize) -> Vec<f32> {
    let coord = |i: usize, n: usize, k: usize| -> (usize, f32) {
        if n <= 1 {
            return (0, 0.0);
        }
        let pos = i as f32 * (k - 1) as f32 / (n - 1) as f32;
        let lo = (pos as usize).min(k - 2);
        (lo, pos - lo as f32)
    };
    let mut out = Vec::with_capacity(antennas * time);
    for a in 0..antennas {
        let (ia, fa) = coord(a, antennas, KNOTS_ANTENNA);
        for t in 0..time {
            let (it, ft) = coord(t, time, KNOTS_TIME);
            let k = |da: usize, dt: usize| knots[(ia + da) * KNOTS_TIME + it + dt];
            let top = k(0, 0) * (1.0 - ft) + k(0, 1) * ft;
            let bottom = k(1, 0) * (1.0 - ft) + k(1, 1) * ft;
            out.push(top * (1.0 - fa) + bottom * fa);
        }
    }
    out
}

/// The noise-free template of every class, `[K, antennas·time]`.
pub fn class_templates(spec: &SynthCorpusSpec) -> Vec<Vec<f32>> {
    let mut rng = Rng::stream(spec.seed, "synth.template");
    let n_knots = KNOTS_ANTENNA * KNOTS_TIME;
    let base_knots: Vec<f32> = (0..n_knots).map(|_| rng.uniform_range(-0.5, 0.5)).collect();
    let base = smooth_pattern(&base_knots, spec.antennas, spec.time);
    (0..spec.num_classes)
        .map(|_| {
            let knots: Vec<f32> = (0..n_knots).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
            smooth_pattern(&knots, spec.antennas, spec.time)
                .into_iter()
                .zip(&base)
                .map(|(p, b)| BASE_LEVEL + b + spec.class_separation * p)
                .collect()
        })
        .collect()
}

/// Balanced corpus; samples cycle through the classes `0, 1, …, K-1, 0, …`.
pub fn synth_corpus(spec: &SynthCorpusSpec) -> Result<CsiBatch> {
    spec.validate()?;
    let templates = class_templates(spec);
    let mut noise = Rng::stream(spec.seed, "synth.noise");
    let d = spec.antennas * spec.time;
    let m = spec.per_class * spec.num_classes;
    let mut data = Vec::with_capacity(m * d);
    let mut labels = Vec::with_capacity(m);
    for _ in 0..spec.per_class {
        for (k, template) in templates.iter().enumerate() {
            data.extend(template.iter().map(|&v| v + spec.noise_sigma * noise.normal()));
            labels.push(k);
        }
    }
    let amplitudes = Tensor::new(&[m, spec.antennas, spec.time], data)?;
    CsiBatch::new(amplitudes, labels, spec.num_classes)
}
