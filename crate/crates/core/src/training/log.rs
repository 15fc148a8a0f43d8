use std::fmt::Write as _;

use crate::error::{Error, Result};

pub const LOG_HEADER: &str = "iter,gen_loss,critic_loss,grad_penalty,disc_acc,wall_ms";

/// One generator update. `critic_loss` and `grad_penalty` average the
/// critic steps that preceded it.
#[derive(Clone, Debug, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    pub gen_loss: f32,
    pub critic_loss: f32,
    pub grad_penalty: Option<f32>,
    pub disc_acc: Option<f32>,
    pub wall_ms: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<IterRecord>,
    pub generator_updates: usize,
    pub critic_updates: usize,
    pub warnings: Vec<String>,
}

/// Summary of the BCE baseline's known failure mode.
#[derive(Clone, Debug, PartialEq)]
pub struct BceSignature {
    /// Fraction of final-quarter iterations with discriminator accuracy above 0.99.
    pub saturated_fraction: f64,
    pub gen_loss_first_quarter: f64,
    pub gen_loss_final_quarter: f64,
    pub flagged: bool,
}

impl BceSignature {
    pub fn summary_line(&self) -> String {
        format!(
            "bce signature: {} (disc_acc > 0.99 in {:.1}% of final quarter; gen_loss first/final quarter {:.4} -> {:.4})",
            if self.flagged { "FAILURE MODE" } else { "not observed" },
            100.0 * self.saturated_fraction,
            self.gen_loss_first_quarter,
            self.gen_loss_final_quarter
        )
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn field(v: Option<impl std::fmt::Display>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl TrainLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.records.iter().all(|r| {
            r.gen_loss.is_finite()
                && r.critic_loss.is_finite()
                && r.grad_penalty.is_none_or(f32::is_finite)
                && r.disc_acc.is_none_or(f32::is_finite)
        })
    }

    /// Mean of `|critic_loss|` over records `range` (clamped to the log).
    pub fn mean_abs_critic(&self, range: std::ops::Range<usize>) -> f64 {
        let end = range.end.min(self.records.len());
        let start = range.start.min(end);
        mean(self.records[start..end].iter().map(|r| (r.critic_loss as f64).abs()))
    }

    /// Final-window over initial-window mean `|critic_loss|`.
    pub fn critic_window_ratio(&self, window: usize) -> f64 {
        let n = self.records.len();
        self.mean_abs_critic(n.saturating_sub(window)..n) / self.mean_abs_critic(0..window)
    }

    pub fn bce_signature(&self) -> BceSignature {
        let n = self.records.len();
        let q = (n / 4).max(1).min(n);
        let last = &self.records[n - q..];
        let saturated = last.iter().filter(|r| r.disc_acc.is_some_and(|a| a > 0.99)).count();
        let saturated_fraction = if q == 0 { 0.0 } else { saturated as f64 / q as f64 };
        let first = mean(self.records[..q].iter().map(|r| r.gen_loss as f64));
        let final_ = mean(last.iter().map(|r| r.gen_loss as f64));
        BceSignature {
            saturated_fraction,
            gen_loss_first_quarter: first,
            gen_loss_final_quarter: final_,
            flagged: saturated_fraction >= 0.8 || final_ > first,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(64 * (self.records.len() + 1));
        s.push_str(LOG_HEADER);
        s.push('\n');
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.iter,
                r.gen_loss,
                r.critic_loss,
                field(r.grad_penalty),
                field(r.disc_acc),
                field(r.wall_ms)
            );
        }
        s
    }

    /// Parse the CSV written by [`TrainLog::to_csv`]; counters and warnings are not stored there.
    pub fn parse_csv(text: &str) -> Result<TrainLog> {
        let mut lines = text.lines();
        if lines.next() != Some(LOG_HEADER) {
            return Err(Error::format("training log header mismatch"));
        }
        fn opt<T: std::str::FromStr>(s: &str) -> Result<Option<T>> {
            if s.is_empty() {
                return Ok(None);
            }
            s.parse().map(Some).map_err(|_| Error::format(format!("bad log field {s:?}")))
        }
        fn req<T: std::str::FromStr>(s: &str) -> Result<T> {
            opt(s)?.ok_or_else(|| Error::format("missing required log field"))
        }
        let mut records = Vec::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(Error::format(format!("log row has {} fields: {line}", f.len())));
            }
            records.push(IterRecord {
                iter: req(f[0])?,
                gen_loss: req(f[1])?,
                critic_loss: req(f[2])?,
                grad_penalty: opt(f[3])?,
                disc_acc: opt(f[4])?,
                wall_ms: opt(f[5])?,
            });
        }
        Ok(TrainLog {
            records,
            ..TrainLog::default()
        })
    }
}
