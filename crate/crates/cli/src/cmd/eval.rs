use std::path::PathBuf;

use clap::Args;
use rayon::prelude::*;

use csigan::data::{load_csi, split, CsiBatch};
use csigan::evaluation::{
    augmented_accuracy, baseline_accuracy, build_report, diversity_metrics, gan_test_score, gan_train_score,
    MetricName, MetricResult, ReportRow,
};
use csigan::models::ClassifierSpec;
use csigan::training::ClassifierTrainConfig;

use crate::config::Settings;
use crate::{create_dir, write_file, CliError, Common};

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    /// Real CSI4DATA corpus; split into train and test with the seed.
    #[arg(long, value_name = "FILE")]
    data: Option<PathBuf>,
    /// Synthetic CSI4DATA samples, or `none` for the baseline alone.
    #[arg(long, value_name = "FILE")]
    synthetic: Option<String>,
    /// Row label in the report table.
    #[arg(long)]
    user: Option<String>,
    /// Training run's `config.toml`, echoed into the report.
    #[arg(long, value_name = "FILE")]
    train_config: Option<PathBuf>,
}

pub fn run(a: EvalArgs, mut s: Settings) -> Result<(), CliError> {
    s.flag("data.path", a.data.as_ref().map(|p| p.display()));
    s.flag("eval.synthetic", a.synthetic);
    s.flag("eval.user", a.user);
    s.flag("eval.seed", a.common.seed);

    let data_path: String = s.require("data.path", "--data")?;
    let synthetic_path: String = s.get("eval.synthetic", "none".to_string())?;
    let user: String = s.get("eval.user", "run".to_string())?;
    let seed: u64 = s.get("eval.seed", 0)?;
    let ratio: f64 = s.get("data.split_ratio", 0.75)?;
    let stratified: bool = s.get("data.stratified", true)?;
    let gan_train_on = s.choice("eval.gan_train_on", "test", &["test", "all"])?;
    let cap_factor: usize = s.get("eval.gan_test_cap", 4)?;
    let d = ClassifierTrainConfig::default();
    let ccfg = ClassifierTrainConfig {
        epochs: s.get("classifier.epochs", d.epochs)?,
        learning_rate: s.get("classifier.lr", d.learning_rate)?,
        batch_size: s.get("classifier.batch_size", d.batch_size)?,
        adam_betas: (s.get("classifier.beta1", d.adam_betas.0)?, s.get("classifier.beta2", d.adam_betas.1)?),
        seed,
    };
    let channels = s.sizes("classifier.channels", ClassifierSpec::DEFAULT_CHANNELS)?;
    s.finish()?;
    let mut echo = s.entries().to_vec();
    if let Some(path) = &a.train_config {
        let train = Settings::load(Some(path))?;
        echo.extend(train.given().map(|(k, v)| (format!("run.{k}"), v.to_string())));
    }

    let real = load_csi(&data_path)?;
    let synthetic = match synthetic_path.as_str() {
        "none" | "" => None,
        path => Some(load_csi(path)?),
    };
    if let Some(syn) = &synthetic {
        check_compatible(&real, syn)?;
    }
    let spec = ClassifierSpec {
        conv_channels: channels,
        ..ClassifierSpec::new(real.antennas(), real.time(), real.num_classes())
    };
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let pair = split(&real, ratio, seed, stratified)?;

    let wanted: Vec<MetricName> = if synthetic.is_some() {
        MetricName::ALL.to_vec()
    } else {
        vec![MetricName::Baseline]
    };
    // each metric trains its own seeded classifier, so they run in parallel
    let results: Vec<MetricResult> = wanted
        .par_iter()
        .map(|&m| {
            let syn = synthetic.as_ref();
            match m {
                MetricName::Baseline => baseline_accuracy(&pair, &spec, &ccfg),
                MetricName::GanTrain => {
                    let target = if gan_train_on == "all" { &real } else { &pair.test };
                    gan_train_score(syn.expect("synthetic present"), target, &spec, &ccfg)
                }
                MetricName::GanTest => gan_test_score(
                    &pair.train,
                    syn.expect("synthetic present"),
                    &spec,
                    &ccfg,
                    Some(cap_factor * pair.test.len()),
                ),
                MetricName::Augmented => augmented_accuracy(&pair, syn.expect("synthetic present"), &spec, &ccfg),
            }
        })
        .collect::<csigan::error::Result<_>>()?;
    let mut slots: [Option<MetricResult>; 4] = Default::default();
    for (m, r) in wanted.iter().zip(results) {
        slots[MetricName::ALL.iter().position(|x| x == m).expect("known metric")] = Some(r);
    }
    let [gan_train, gan_test, baseline, augmented] = slots;
    let diversity = synthetic.as_ref().map(diversity_metrics).unwrap_or_default();
    let report = build_report(
        user,
        gan_train,
        gan_test,
        baseline,
        augmented,
        diversity,
        echo,
    )?;

    let out = &a.common.out;
    create_dir(out)?;
    write_file(&out.join("config.toml"), s.snapshot())?;
    write_file(&out.join("report.txt"), report.to_text())?;
    write_file(&out.join("report.csv"), report.to_csv())?;
    for m in MetricName::ALL {
        if let Some(r) = report.metric(m) {
            write_file(&out.join(format!("confusion_{}.csv", m.key())), r.confusion.to_csv())?;
        }
    }
    print!("{}", ReportRow::table(&[report.row()]));
    Ok(())
}

/// Both sets must share shape, class count and scale; mixing normalized and
/// raw amplitudes would silently wreck every metric.
fn check_compatible(real: &CsiBatch, syn: &CsiBatch) -> Result<(), CliError> {
    if (real.antennas(), real.time(), real.num_classes()) != (syn.antennas(), syn.time(), syn.num_classes()) {
        return Err(CliError::Contract(format!(
            "synthetic set is {}x{} with {} classes, real data {}x{} with {}",
            syn.antennas(),
            syn.time(),
            syn.num_classes(),
            real.antennas(),
            real.time(),
            real.num_classes()
        )));
    }
    if real.is_normalized() != syn.is_normalized() {
        let side = |b: &CsiBatch| if b.is_normalized() { "normalized" } else { "raw" };
        return Err(CliError::Contract(format!(
            "normalization mismatch: real data is {}, synthetic data is {}",
            side(real),
            side(syn)
        )));
    }
    Ok(())
}
