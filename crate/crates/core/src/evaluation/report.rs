use std::fmt::Write as _;

use super::{ClassDiversity, MetricResult};
use crate::error::{Error, Result};

pub const REPORT_CSV_HEADER: &str = "metric,user,value";

/// The four headline metrics in table column order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetricName {
    GanTrain,
    GanTest,
    Baseline,
    Augmented,
}

impl MetricName {
    pub const ALL: [MetricName; 4] = [MetricName::GanTrain, MetricName::GanTest, MetricName::Baseline, MetricName::Augmented];

    pub fn key(self) -> &'static str {
        match self {
            MetricName::GanTrain => "gan_train",
            MetricName::GanTest => "gan_test",
            MetricName::Baseline => "baseline_acc",
            MetricName::Augmented => "augmented_acc",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            MetricName::GanTrain => "GAN-train",
            MetricName::GanTest => "GAN-test",
            MetricName::Baseline => "Baseline Acc.",
            MetricName::Augmented => "cWGAN Acc.",
        }
    }

    pub fn from_key(key: &str) -> Option<MetricName> {
        MetricName::ALL.into_iter().find(|m| m.key() == key)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub user: String,
    pub gan_train: Option<MetricResult>,
    pub gan_test: Option<MetricResult>,
    pub baseline: Option<MetricResult>,
    pub augmented: Option<MetricResult>,
    pub diversity: Vec<ClassDiversity>,
    /// Resolved settings echoed verbatim, `(key, value)`.
    pub config: Vec<(String, String)>,
}

/// The headline numbers of one report: what the CSV stores.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReportRow {
    pub user: String,
    pub gan_train: Option<f64>,
    pub gan_test: Option<f64>,
    pub baseline: Option<f64>,
    pub augmented: Option<f64>,
}

impl ReportRow {
    pub fn get(&self, m: MetricName) -> Option<f64> {
        match m {
            MetricName::GanTrain => self.gan_train,
            MetricName::GanTest => self.gan_test,
            MetricName::Baseline => self.baseline,
            MetricName::Augmented => self.augmented,
        }
    }

    fn slot(&mut self, m: MetricName) -> &mut Option<f64> {
        match m {
            MetricName::GanTrain => &mut self.gan_train,
            MetricName::GanTest => &mut self.gan_test,
            MetricName::Baseline => &mut self.baseline,
            MetricName::Augmented => &mut self.augmented,
        }
    }

    /// `metric,user,value` lines; absent metrics are omitted.
    pub fn csv_lines(&self, out: &mut String) {
        for m in MetricName::ALL {
            if let Some(v) = self.get(m) {
                let _ = writeln!(out, "{},{},{v}", m.key(), self.user);
            }
        }
    }

    /// Rows in order of first appearance of each user.
    pub fn parse_csv(text: &str) -> Result<Vec<ReportRow>> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(REPORT_CSV_HEADER) {
            return Err(Error::format("report CSV header mismatch"));
        }
        let mut rows: Vec<ReportRow> = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 3 {
                return Err(Error::format(format!("bad report row {line:?}")));
            }
            let metric = MetricName::from_key(f[0]).ok_or_else(|| Error::format(format!("unknown metric {}", f[0])))?;
            let value: f64 = f[2].parse().map_err(|_| Error::format(format!("bad value {}", f[2])))?;
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::format(format!("{} = {value} is not a fraction", f[0])));
            }
            let pos = match rows.iter().position(|r| r.user == f[1]) {
                Some(p) => p,
                None => {
                    rows.push(ReportRow { user: f[1].to_string(), ..ReportRow::default() });
                    rows.len() - 1
                }
            };
            *rows[pos].slot(metric) = Some(value);
        }
        Ok(rows)
    }

    /// Plain-text table, one row per report, columns in table order.
    pub fn table(rows: &[ReportRow]) -> String {
        let mut s = format!("{:<8}", "user");
        for m in MetricName::ALL {
            let _ = write!(s, " | {:>13}", m.title());
        }
        s.push('\n');
        s.push_str(&"-".repeat(s.len() - 1));
        s.push('\n');
        for r in rows {
            let _ = write!(s, "{:<8}", r.user);
            for m in MetricName::ALL {
                let cell = r.get(m).map_or("-".to_string(), |v| format!("{:.1}%", 100.0 * v));
                let _ = write!(s, " | {cell:>13}");
            }
            s.push('\n');
        }
        s
    }
}

impl EvalReport {
    pub fn metric(&self, m: MetricName) -> Option<&MetricResult> {
        match m {
            MetricName::GanTrain => self.gan_train.as_ref(),
            MetricName::GanTest => self.gan_test.as_ref(),
            MetricName::Baseline => self.baseline.as_ref(),
            MetricName::Augmented => self.augmented.as_ref(),
        }
    }

    pub fn row(&self) -> ReportRow {
        ReportRow {
            user: self.user.clone(),
            gan_train: self.gan_train.as_ref().map(|m| m.accuracy),
            gan_test: self.gan_test.as_ref().map(|m| m.accuracy),
            baseline: self.baseline.as_ref().map(|m| m.accuracy),
            augmented: self.augmented.as_ref().map(|m| m.accuracy),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{REPORT_CSV_HEADER}\n");
        self.row().csv_lines(&mut s);
        s
    }

    /// Table, per-class diversity and the configuration echo.
    pub fn to_text(&self) -> String {
        let mut s = ReportRow::table(&[self.row()]);
        if !self.diversity.is_empty() {
            s.push_str("\nsynthetic diversity\nclass    count  mean_pairwise_l2  mean_feature_std  status\n");
            for d in &self.diversity {
                let _ = writeln!(
                    s,
                    "{:<8} {:>5}  {:>16.4}  {:>16.4}  {}",
                    d.class,
                    d.count,
                    d.mean_pairwise_l2,
                    d.mean_feature_std,
                    d.status.as_str()
                );
            }
        }
        if !self.config.is_empty() {
            s.push_str("\nconfiguration\n");
            for (k, v) in &self.config {
                let _ = writeln!(s, "{k} = {v}");
            }
        }
        s
    }
}

/// Assemble a report after checking every metric agrees on the class count
/// and every confusion matrix accounts for its whole test set.
pub fn build_report(
    user: impl Into<String>,
    gan_train: Option<MetricResult>,
    gan_test: Option<MetricResult>,
    baseline: Option<MetricResult>,
    augmented: Option<MetricResult>,
    diversity: Vec<ClassDiversity>,
    config: Vec<(String, String)>,
) -> Result<EvalReport> {
    let report = EvalReport {
        user: user.into(),
        gan_train,
        gan_test,
        baseline,
        augmented,
        diversity,
        config,
    };
    if report.user.contains([',', '\n']) {
        return Err(Error::contract(format!("user label {:?} cannot contain commas or newlines", report.user)));
    }
    let mut k = None;
    for m in MetricName::ALL {
        if let Some(r) = report.metric(m) {
            let mk = r.confusion.num_classes();
            if *k.get_or_insert(mk) != mk {
                return Err(Error::contract(format!(
                    "{} has {mk} classes, other metrics {}",
                    m.key(),
                    k.unwrap_or(0)
                )));
            }
            if r.confusion.total() as usize != r.test_size {
                return Err(Error::contract(format!("{} confusion does not cover its test set", m.key())));
            }
            if !(0.0..=1.0).contains(&r.accuracy) {
                return Err(Error::contract(format!("{} accuracy {} is not a fraction", m.key(), r.accuracy)));
            }
        }
    }
    if !report.diversity.is_empty() && k.is_some_and(|k| k != report.diversity.len()) {
        return Err(Error::contract("diversity report class count differs from the metrics"));
    }
    Ok(report)
}
