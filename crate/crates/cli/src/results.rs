//! Results rows, seed aggregates and their CSV / aligned-text renderings.

use std::path::Path;

use retrolearn::trainer::{Aggregate, EpochRecord, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const RESULTS_FILE: &str = "results.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const EPOCH_LOG_HEADER: &str = "epoch,train_loss,train_acc,test_acc,alpha,beta,committed";

/// One run. Accuracies are fractions in `[0, 1]`; `status` is `ok` or
/// `failed: <reason>`, and `params` carries the full hyperparameter string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub run_id: String,
    pub method: String,
    pub dataset: String,
    pub seed: u64,
    pub tau: Option<f64>,
    pub k: Option<usize>,
    pub epochs: usize,
    pub batch: usize,
    pub noise_rate: f64,
    pub last_acc: Option<f64>,
    pub best_acc: Option<f64>,
    pub ece: Option<f64>,
    pub wall_time_s: Option<f64>,
    pub status: String,
    pub params: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub last_acc: f64,
    pub best_acc: f64,
    pub ece: f64,
    pub wall_time_s: f64,
}

impl ResultRow {
    pub fn new(dataset: &str, config: &TrainConfig, outcome: Result<Outcome, String>) -> Self {
        let lwr = config.method == retrolearn::trainer::Method::Lwr;
        let params = config.provenance();
        let (o, status) = match outcome {
            Ok(o) => (Some(o), "ok".to_string()),
            Err(e) => (None, format!("failed: {e}")),
        };
        Self {
            run_id: run_id(dataset, config),
            method: config.method.to_string(),
            dataset: dataset.to_string(),
            seed: config.seed,
            tau: lwr.then_some(config.tau),
            k: lwr.then_some(config.interval),
            epochs: config.epochs,
            batch: config.batch_size,
            noise_rate: config.noise_rate,
            last_acc: o.map(|o| o.last_acc),
            best_acc: o.map(|o| o.best_acc),
            ece: o.map(|o| o.ece),
            wall_time_s: o.map(|o| o.wall_time_s),
            status,
            params,
        }
    }

    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

/// `<dataset>-<method>-s<seed>-<hash of every hyperparameter>`.
pub fn run_id(dataset: &str, config: &TrainConfig) -> String {
    let mut h: u32 = 0x811c_9dc5;
    for b in dataset.bytes().chain(config.provenance().bytes()) {
        h ^= u32::from(b);
        h = h.wrapping_mul(0x0100_0193);
    }
    format!("{dataset}-{}-s{}-{h:08x}", config.method, config.seed)
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>, CliError> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| CliError::data(format!("{} row {}: {e}", path.display(), i + 2))))
        .collect()
}

pub fn write_epoch_log(path: &Path, epochs: &[EpochRecord]) -> Result<(), CliError> {
    let mut out = String::from(EPOCH_LOG_HEADER);
    out.push('\n');
    for e in epochs {
        let test = e.test_acc.map(|a| a.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            e.epoch, e.train_loss, e.train_acc, test, e.alpha, e.beta, e.committed
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Mean ± population std over the seeds of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub kind: String,
    pub method: String,
    pub dataset: String,
    pub tau: Option<f64>,
    pub k: Option<usize>,
    pub epochs: usize,
    pub batch: usize,
    pub noise_rate: f64,
    pub n: usize,
    pub failures: usize,
    pub last_mean: f64,
    pub last_std: f64,
    pub best_mean: f64,
    pub best_std: f64,
    pub ece_mean: f64,
    pub ece_std: f64,
}

type GroupKey = (String, String, Option<u64>, Option<usize>, usize, usize, u64);

fn group_key(r: &ResultRow) -> GroupKey {
    (
        r.method.clone(),
        r.dataset.clone(),
        r.tau.map(f64::to_bits),
        r.k,
        r.epochs,
        r.batch,
        r.noise_rate.to_bits(),
    )
}

/// Groups rows that differ only in seed, in order of first appearance.
pub fn aggregate(rows: &[ResultRow]) -> Vec<AggregateRow> {
    let mut keys: Vec<GroupKey> = Vec::new();
    for r in rows {
        let k = group_key(r);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.iter()
        .map(|key| {
            let members: Vec<&ResultRow> = rows.iter().filter(|r| &group_key(r) == key).collect();
            let ok: Vec<&ResultRow> = members.iter().copied().filter(|r| r.ok()).collect();
            let agg = |f: fn(&ResultRow) -> Option<f64>| {
                Aggregate::of(&ok.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
            };
            let (last, best, ece) = (agg(|r| r.last_acc), agg(|r| r.best_acc), agg(|r| r.ece));
            let first = members[0];
            AggregateRow {
                kind: "aggregate".into(),
                method: first.method.clone(),
                dataset: first.dataset.clone(),
                tau: first.tau,
                k: first.k,
                epochs: first.epochs,
                batch: first.batch,
                noise_rate: first.noise_rate,
                n: ok.len(),
                failures: members.len() - ok.len(),
                last_mean: last.mean,
                last_std: last.std,
                best_mean: best.mean,
                best_std: best.std,
                ece_mean: ece.mean,
                ece_std: ece.std,
            }
        })
        .collect()
}

pub fn write_aggregates(path: &Path, rows: &[AggregateRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn pct(mean: f64, std: f64) -> String {
    if mean.is_nan() {
        "-".into()
    } else {
        format!("{:.2}±{:.2}", 100.0 * mean, 100.0 * std)
    }
}

/// Left-aligns every column to its widest cell.
pub fn align(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for r in rows {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, s)| format!("{s}{}", " ".repeat(widths[c] - s.chars().count())))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

pub fn summary_text(aggs: &[AggregateRow]) -> String {
    let mut rows = vec![[
        "method", "dataset", "tau", "k", "noise", "n", "failed", "last (%)", "best (%)", "ece (%)",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect::<Vec<_>>()];
    for a in aggs {
        rows.push(vec![
            a.method.clone(),
            a.dataset.clone(),
            a.tau.map(|t| t.to_string()).unwrap_or_else(|| "-".into()),
            a.k.map(|k| k.to_string()).unwrap_or_else(|| "-".into()),
            format!("{:.0}%", 100.0 * a.noise_rate),
            a.n.to_string(),
            a.failures.to_string(),
            pct(a.last_mean, a.last_std),
            pct(a.best_mean, a.best_std),
            pct(a.ece_mean, a.ece_std),
        ]);
    }
    align(&rows)
}

/// Noise rates down the side, methods across, a Last and a Best line per rate.
pub fn robustness_text(aggs: &[AggregateRow]) -> String {
    let mut methods: Vec<&str> = Vec::new();
    let mut rates: Vec<f64> = Vec::new();
    for a in aggs {
        if !methods.contains(&a.method.as_str()) {
            methods.push(&a.method);
        }
        if !rates.contains(&a.noise_rate) {
            rates.push(a.noise_rate);
        }
    }
    let mut rows = vec![std::iter::once("Noise".to_string())
        .chain(std::iter::once("Accuracy".to_string()))
        .chain(methods.iter().map(|m| m.to_string()))
        .collect::<Vec<_>>()];
    for &rate in &rates {
        for (label, pick) in [
            ("Last", (|a: &AggregateRow| (a.last_mean, a.last_std)) as fn(&AggregateRow) -> (f64, f64)),
            ("Best", |a: &AggregateRow| (a.best_mean, a.best_std)),
        ] {
            let mut row = vec![
                if label == "Last" {
                    format!("{:.0}%", 100.0 * rate)
                } else {
                    String::new()
                },
                label.to_string(),
            ];
            for m in &methods {
                let cell = aggs
                    .iter()
                    .find(|a| a.method == *m && a.noise_rate == rate)
                    .map(|a| {
                        let (mean, std) = pick(a);
                        pct(mean, std)
                    })
                    .unwrap_or_else(|| "-".into());
                row.push(cell);
            }
            rows.push(row);
        }
    }
    align(&rows)
}
