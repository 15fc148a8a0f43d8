//! GAN-train, GAN-test, baseline and augmented accuracy, plus diversity
//! diagnostics and the consolidated report.
//!
//! All four accuracies share one code path: train a fresh classifier on one
//! set, score it on another.

mod report;

use crate::data::{merge, CsiBatch, SplitPair};
use crate::error::{Error, Result};
use crate::models::ClassifierSpec;
use crate::rng::Rng;
use crate::training::{predict, train_classifier, ClassifierTrainConfig};

pub use report::{build_report, EvalReport, MetricName, ReportRow, REPORT_CSV_HEADER};

/// `counts[t][p]`: samples of true class `t` predicted as `p`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Confusion {
    k: usize,
    counts: Vec<u64>,
}

impl Confusion {
    pub fn new(k: usize) -> Self {
        Confusion { k, counts: vec![0; k * k] }
    }

    pub fn from_predictions(k: usize, truth: &[usize], predicted: &[usize]) -> Self {
        let mut c = Confusion::new(k);
        for (&t, &p) in truth.iter().zip(predicted) {
            c.counts[t * k + p] += 1;
        }
        c
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.k + predicted]
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.chunks(self.k.max(1)).map(|r| r.iter().sum()).collect()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.get(i, i)).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `trace / total`, or 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.trace() as f64 / n as f64,
        }
    }

    /// CSV grid with a `true\pred` header row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("true\\pred");
        for p in 0..self.k {
            s.push_str(&format!(",{p}"));
        }
        s.push('\n');
        for t in 0..self.k {
            s.push_str(&t.to_string());
            for p in 0..self.k {
                s.push_str(&format!(",{}", self.get(t, p)));
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricResult {
    pub accuracy: f64,
    pub confusion: Confusion,
    /// Sizes of the sets the classifier was trained and scored on.
    pub train_size: usize,
    pub test_size: usize,
}

/// Settings shared by all four accuracy metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalSettings {
    pub classifier: ClassifierTrainConfig,
    /// GAN-test scores at most `gan_test_cap × |real test|` synthetic samples.
    pub gan_test_cap: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            classifier: ClassifierTrainConfig::default(),
            gan_test_cap: 4,
        }
    }
}

fn compatible(a: &CsiBatch, b: &CsiBatch) -> Result<()> {
    if (a.antennas(), a.time(), a.num_classes()) != (b.antennas(), b.time(), b.num_classes()) {
        return Err(Error::contract(format!(
            "incompatible sets: {}x{} K={} vs {}x{} K={}",
            a.antennas(),
            a.time(),
            a.num_classes(),
            b.antennas(),
            b.time(),
            b.num_classes()
        )));
    }
    Ok(())
}

/// Train on `train`, score on `test`.
pub fn fit_and_score(
    train: &CsiBatch,
    test: &CsiBatch,
    spec: &ClassifierSpec,
    cfg: &ClassifierTrainConfig,
) -> Result<MetricResult> {
    compatible(train, test)?;
    if test.is_empty() {
        return Err(Error::contract("evaluation set is empty"));
    }
    if train.is_empty() {
        return Err(Error::contract("classifier training set is empty"));
    }
    let model = train_classifier(train, spec, cfg)?;
    let predicted = predict(spec, &model.params, test)?;
    let confusion = Confusion::from_predictions(test.num_classes(), test.labels(), &predicted);
    Ok(MetricResult {
        accuracy: confusion.accuracy(),
        confusion,
        train_size: train.len(),
        test_size: test.len(),
    })
}

/// Classifier trained only on synthetic samples, scored on real data.
pub fn gan_train_score(
    synthetic: &CsiBatch,
    real_test: &CsiBatch,
    spec: &ClassifierSpec,
    cfg: &ClassifierTrainConfig,
) -> Result<MetricResult> {
    if synthetic.is_empty() {
        return Err(Error::contract("GAN-train needs synthetic samples"));
    }
    fit_and_score(synthetic, real_test, spec, cfg)
}

/// Classifier trained on real data, scored on at most `cap` synthetic samples.
pub fn gan_test_score(
    real_train: &CsiBatch,
    synthetic: &CsiBatch,
    spec: &ClassifierSpec,
    cfg: &ClassifierTrainConfig,
    cap: Option<usize>,
) -> Result<MetricResult> {
    let scored = match cap {
        Some(cap) if synthetic.len() > cap => subsample_per_class(synthetic, cap, cfg.seed),
        _ => synthetic.clone(),
    };
    fit_and_score(real_train, &scored, spec, cfg)
}

/// About `cap` samples keeping each class's share, chosen uniformly at random.
pub fn subsample_per_class(batch: &CsiBatch, cap: usize, seed: u64) -> CsiBatch {
    let mut rng = Rng::stream(seed, "eval.subsample");
    let k = batch.num_classes();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in batch.labels().iter().enumerate() {
        by_class[l].push(i);
    }
    let m = batch.len();
    let mut keep = Vec::with_capacity(cap);
    for idx in &mut by_class {
        let quota = (cap * idx.len()) / m.max(1);
        rng.shuffle(idx);
        keep.extend_from_slice(&idx[..quota.min(idx.len())]);
    }
    keep.sort_unstable();
    batch.select(&keep)
}

pub fn baseline_accuracy(split: &SplitPair, spec: &ClassifierSpec, cfg: &ClassifierTrainConfig) -> Result<MetricResult> {
    fit_and_score(&split.train, &split.test, spec, cfg)
}

/// Trained on real train ∪ synthetic, scored on the real test split. With
/// no synthetic samples this is exactly [`baseline_accuracy`].
pub fn augmented_accuracy(
    split: &SplitPair,
    synthetic: &CsiBatch,
    spec: &ClassifierSpec,
    cfg: &ClassifierTrainConfig,
) -> Result<MetricResult> {
    let train = merge(&split.train, synthetic)?;
    fit_and_score(&train, &split.test, spec, cfg)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiversityStatus {
    Ok,
    Collapsed,
    Insufficient,
}

impl DiversityStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            DiversityStatus::Ok => "ok",
            DiversityStatus::Collapsed => "collapsed",
            DiversityStatus::Insufficient => "insufficient",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassDiversity {
    pub class: usize,
    pub count: usize,
    /// Mean L2 distance over all pairs of (at most [`DIVERSITY_MAX_SAMPLES`]) samples.
    pub mean_pairwise_l2: f64,
    /// Per-feature standard deviation averaged over features.
    pub mean_feature_std: f64,
    pub status: DiversityStatus,
}

/// Pairwise distances are computed on an evenly strided subset of this many
/// samples per class, keeping the cost bounded for large synthetic sets.
pub const DIVERSITY_MAX_SAMPLES: usize = 512;

/// Per-class spread of a sample set; a class is collapsed when its mean
/// pairwise distance is below `1e-3 × features`.
pub fn diversity_metrics(batch: &CsiBatch) -> Vec<ClassDiversity> {
    let d = batch.features();
    (0..batch.num_classes())
        .map(|class| {
            let idx: Vec<usize> = (0..batch.len()).filter(|&i| batch.labels()[i] == class).collect();
            let count = idx.len();
            if count < 2 {
                return ClassDiversity {
                    class,
                    count,
                    mean_pairwise_l2: 0.0,
                    mean_feature_std: 0.0,
                    status: DiversityStatus::Insufficient,
                };
            }
            let stride = count.div_ceil(DIVERSITY_MAX_SAMPLES);
            let used: Vec<&[f32]> = idx.iter().step_by(stride).map(|&i| batch.sample(i)).collect();
            let mut sum = 0.0f64;
            let mut pairs = 0u64;
            for a in 0..used.len() {
                for b in a + 1..used.len() {
                    let sq: f64 = used[a]
                        .iter()
                        .zip(used[b])
                        .map(|(&x, &y)| ((x - y) as f64).powi(2))
                        .sum();
                    sum += sq.sqrt();
                    pairs += 1;
                }
            }
            let mean_pairwise_l2 = sum / pairs as f64;
            let mut std_sum = 0.0f64;
            for f in 0..d {
                let vals = idx.iter().map(|&i| batch.sample(i)[f] as f64);
                let mean = vals.clone().sum::<f64>() / count as f64;
                let var = vals.map(|v| (v - mean).powi(2)).sum::<f64>() / count as f64;
                std_sum += var.sqrt();
            }
            let status = if mean_pairwise_l2 < 1e-3 * d as f64 {
                DiversityStatus::Collapsed
            } else {
                DiversityStatus::Ok
            };
            ClassDiversity {
                class,
                count,
                mean_pairwise_l2,
                mean_feature_std: std_sum / d.max(1) as f64,
                status,
            }
        })
        .collect()
}
