//! Accuracy, expected calibration error and reliability-diagram bins.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{contract, precondition, Result};

pub const DEFAULT_BINS: usize = 15;

pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(contract(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(precondition("accuracy of an empty set is undefined"));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// One equal-width confidence interval `(lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// `None` for empty bins.
    pub mean_confidence: Option<f64>,
    pub mean_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBins {
    pub bins: Vec<Bin>,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EceReport {
    pub ece: f64,
    pub reliability: ReliabilityBins,
}

/// Lower edge of bin `m` of `num_bins`; the upper edge is `bin_edge(m + 1, ..)`.
pub fn bin_edge(m: usize, num_bins: usize) -> f64 {
    m as f64 / num_bins as f64
}

/// Bin of a confidence in `[0, 1]`: bin `m` holds `(m/M, (m+1)/M]`, and 0
/// falls in the first bin.
fn bin_index(conf: f64, num_bins: usize) -> usize {
    let mut idx = ((conf * num_bins as f64).ceil() as usize).clamp(1, num_bins) - 1;
    // Rounding in conf·M can push an exact edge one bin up.
    if idx > 0 && conf <= bin_edge(idx, num_bins) {
        idx -= 1;
    }
    if idx + 1 < num_bins && conf > bin_edge(idx + 1, num_bins) {
        idx += 1;
    }
    idx
}

/// `ECE = Σ_m (|B_m| / n)·|acc(B_m) − conf(B_m)|` over equal-width bins.
pub fn compute_ece(confidences: &[f64], correct: &[bool], num_bins: usize) -> Result<EceReport> {
    if confidences.len() != correct.len() {
        return Err(contract(format!(
            "{} confidences for {} correctness flags",
            confidences.len(),
            correct.len()
        )));
    }
    if confidences.is_empty() || num_bins == 0 {
        return Err(precondition("ECE needs at least one sample and one bin"));
    }
    if let Some(c) = confidences.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        return Err(precondition(format!("confidence {c} outside [0, 1]")));
    }

    let mut counts = vec![0usize; num_bins];
    let mut conf_sum = vec![0.0; num_bins];
    let mut hit_sum = vec![0.0; num_bins];
    for (&c, &ok) in confidences.iter().zip(correct) {
        let m = bin_index(c, num_bins);
        counts[m] += 1;
        conf_sum[m] += c;
        if ok {
            hit_sum[m] += 1.0;
        }
    }

    let n = confidences.len();
    let mut ece = 0.0;
    let mut bins = Vec::with_capacity(num_bins);
    for m in 0..num_bins {
        let (mean_confidence, mean_accuracy) = if counts[m] > 0 {
            let k = counts[m] as f64;
            let (conf, acc) = (conf_sum[m] / k, hit_sum[m] / k);
            ece += (k / n as f64) * (acc - conf).abs();
            (Some(conf), Some(acc))
        } else {
            (None, None)
        };
        bins.push(Bin {
            lower: bin_edge(m, num_bins),
            upper: bin_edge(m + 1, num_bins),
            count: counts[m],
            mean_confidence,
            mean_accuracy,
        });
    }
    Ok(EceReport {
        ece,
        reliability: ReliabilityBins { bins, total: n },
    })
}

impl EceReport {
    /// Recomputes the scalar from the stored bins.
    pub fn recompute(&self) -> f64 {
        let n = self.reliability.total as f64;
        self.reliability
            .bins
            .iter()
            .filter_map(|b| {
                Some((b.count as f64 / n) * (b.mean_accuracy? - b.mean_confidence?).abs())
            })
            .sum()
    }

    /// Reliability CSV: `bin_low,bin_high,count,avg_conf,avg_acc`, one row
    /// per bin (empty bins leave the averages blank) and a trailing
    /// `# ece=` comment.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_low,bin_high,count,avg_conf,avg_acc\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for b in &self.reliability.bins {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                b.lower,
                b.upper,
                b.count,
                opt(b.mean_confidence),
                opt(b.mean_accuracy)
            ));
        }
        out.push_str(&format!("# ece={}\n", self.ece));
        out
    }
}

pub fn reliability_export(report: &EceReport, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(report.to_csv().as_bytes())?;
    Ok(())
}
