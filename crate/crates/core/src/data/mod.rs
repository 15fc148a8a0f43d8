//! CSI amplitude batches and the operations that reshape them.

mod container;
mod split;
mod synth;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use container::{load_csi, read_csi, save_csi, write_csi, write_provenance_csv, DATA_MAGIC, DATA_VERSION};
pub use split::{split, SplitPair};
pub use synth::{class_templates, synth_corpus, SynthCorpusSpec};

/// Where a sample came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Source {
    Real,
    Synthetic,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Real => "real",
            Source::Synthetic => "synthetic",
        }
    }
}

/// Global min/max used for the affine map to `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormParams {
    pub min: f32,
    pub max: f32,
}

impl NormParams {
    /// A constant dataset has no range; it normalizes to zeros.
    pub fn is_degenerate(&self) -> bool {
        self.max <= self.min
    }

    pub fn forward(&self, x: f32) -> f32 {
        if self.is_degenerate() {
            0.0
        } else {
            2.0 * (x - self.min) / (self.max - self.min) - 1.0
        }
    }

    pub fn inverse(&self, y: f32) -> f32 {
        (y + 1.0) * 0.5 * (self.max - self.min) + self.min
    }
}

/// Labeled CSI amplitudes, `samples × antennas × time`.
#[derive(Clone, Debug, PartialEq)]
pub struct CsiBatch {
    amplitudes: Tensor,
    labels: Vec<usize>,
    num_classes: usize,
    pub user_id: Option<i16>,
    norm: Option<NormParams>,
    sources: Vec<Source>,
}

impl CsiBatch {
    pub fn new(amplitudes: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if amplitudes.rank() != 3 {
            return Err(Error::dim(format!(
                "CSI batch must be [samples, antennas, time], got {:?}",
                amplitudes.shape()
            )));
        }
        if labels.len() != amplitudes.shape()[0] {
            return Err(Error::data(format!(
                "{} labels for {} samples",
                labels.len(),
                amplitudes.shape()[0]
            )));
        }
        if num_classes == 0 {
            return Err(Error::data("num_classes must be positive"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::data(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        let n = labels.len();
        Ok(CsiBatch {
            amplitudes,
            labels,
            num_classes,
            user_id: None,
            norm: None,
            sources: vec![Source::Real; n],
        })
    }

    pub fn empty(antennas: usize, time: usize, num_classes: usize) -> Self {
        CsiBatch::new(Tensor::zeros(&[0, antennas, time]), Vec::new(), num_classes)
            .expect("empty batch is valid")
    }

    /// Reinterpret `[m, antennas·time]` rows as a batch.
    pub fn from_flat(flat: &Tensor, antennas: usize, time: usize, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let m = flat.rows();
        let t = flat.reshape(&[m, antennas, time])?;
        CsiBatch::new(t, labels, num_classes)
    }

    pub fn with_user(mut self, user: Option<i16>) -> Self {
        self.user_id = user;
        self
    }

    pub fn with_source(mut self, source: Source) -> Self {
        self.sources.iter_mut().for_each(|s| *s = source);
        self
    }

    /// Mark as already normalized with the given parameters.
    pub fn with_norm(mut self, norm: Option<NormParams>) -> Self {
        self.norm = norm;
        self
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn antennas(&self) -> usize {
        self.amplitudes.shape()[1]
    }

    pub fn time(&self) -> usize {
        self.amplitudes.shape()[2]
    }

    /// Values per sample.
    pub fn features(&self) -> usize {
        self.antennas() * self.time()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn amplitudes(&self) -> &Tensor {
        &self.amplitudes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sources(&self) -> &[Source] {
        &self.sources
    }

    pub fn norm_params(&self) -> Option<NormParams> {
        self.norm
    }

    pub fn is_normalized(&self) -> bool {
        self.norm.is_some()
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        self.amplitudes.row(i)
    }

    /// `[m, antennas·time]` view, one flattened sample per row.
    pub fn flat(&self) -> Tensor {
        self.amplitudes
            .reshape(&[self.len(), self.features()])
            .expect("same element count")
    }

    /// `[m, 1, antennas, time]` view for the classifier.
    pub fn as_images(&self) -> Tensor {
        self.amplitudes
            .reshape(&[self.len(), 1, self.antennas(), self.time()])
            .expect("same element count")
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Samples at `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> CsiBatch {
        CsiBatch {
            amplitudes: self.amplitudes.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            user_id: self.user_id,
            norm: self.norm,
            sources: idx.iter().map(|&i| self.sources[i]).collect(),
        }
    }

    /// Same samples with new labels (used by label-shuffle diagnostics).
    pub fn relabel(&self, labels: Vec<usize>) -> Result<CsiBatch> {
        let mut out = CsiBatch::new(self.amplitudes.clone(), labels, self.num_classes)?;
        out.user_id = self.user_id;
        out.norm = self.norm;
        out.sources = self.sources.clone();
        Ok(out)
    }

    /// Min-max map onto `[-1, 1]` using this batch's global range.
    ///
    /// A constant batch maps to zeros and logs a warning; its parameters
    /// report [`NormParams::is_degenerate`]. Normalizing twice is an error.
    pub fn normalize(&self) -> Result<CsiBatch> {
        if self.is_normalized() {
            return Err(Error::contract("batch is already normalized"));
        }
        if self.is_empty() {
            return Err(Error::data("cannot normalize an empty batch"));
        }
        let d = self.amplitudes.data();
        let min = d.iter().copied().fold(f32::INFINITY, f32::min);
        let max = d.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let params = NormParams { min, max };
        if params.is_degenerate() {
            log::warn!("constant batch (value {min}); normalized to zeros");
        }
        self.normalize_with(params)
    }

    /// Map onto `[-1, 1]` with externally supplied parameters, clamping
    /// values that fall outside that range.
    pub fn normalize_with(&self, params: NormParams) -> Result<CsiBatch> {
        if self.is_normalized() {
            return Err(Error::contract("batch is already normalized"));
        }
        let mut out = self.clone();
        out.amplitudes = self
            .amplitudes
            .map(|x| params.forward(x).clamp(-1.0, 1.0));
        out.norm = Some(params);
        Ok(out)
    }

    pub fn denormalize(&self) -> Result<CsiBatch> {
        let params = self
            .norm
            .ok_or_else(|| Error::contract("batch is not normalized"))?;
        let mut out = self.clone();
        out.amplitudes = self.amplitudes.map(|y| params.inverse(y));
        out.norm = None;
        Ok(out)
    }

    /// FNV-1a over the bit patterns of sample `i`.
    pub fn row_checksum(&self, i: usize) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.sample(i) {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

/// Concatenate real and synthetic samples, keeping per-sample provenance.
pub fn merge(real: &CsiBatch, synthetic: &CsiBatch) -> Result<CsiBatch> {
    if real.antennas() != synthetic.antennas()
        || real.time() != synthetic.time()
        || real.num_classes != synthetic.num_classes
    {
        return Err(Error::contract(format!(
            "cannot merge {}x{} (K={}) with {}x{} (K={})",
            real.antennas(),
            real.time(),
            real.num_classes,
            synthetic.antennas(),
            synthetic.time(),
            synthetic.num_classes
        )));
    }
    if synthetic.is_empty() {
        return Ok(real.clone());
    }
    if real.is_empty() {
        return Ok(synthetic.clone());
    }
    if real.norm != synthetic.norm {
        return Err(Error::contract(format!(
            "normalization mismatch: {:?} vs {:?}",
            real.norm, synthetic.norm
        )));
    }
    let amplitudes = Tensor::concat_rows(&[&real.amplitudes, &synthetic.amplitudes])?;
    let mut labels = real.labels.clone();
    labels.extend_from_slice(&synthetic.labels);
    let mut sources = real.sources.clone();
    sources.extend_from_slice(&synthetic.sources);
    Ok(CsiBatch {
        amplitudes,
        labels,
        num_classes: real.num_classes,
        user_id: real.user_id,
        norm: real.norm,
        sources,
    })
}
