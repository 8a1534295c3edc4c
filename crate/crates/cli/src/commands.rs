//! The `run`, `sweep`, `robustness` and `report` subcommands.
//!
//! Every command resolves its config and loads its data before touching
//! the output directory, so a bad config or missing file leaves nothing
//! behind.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use retrolearn::metrics::reliability_export;
use retrolearn::trainer::{run_many, run_sweep, train, Method, SweepGrid, TrainConfig, TrainReport};
use serde::Serialize;

use crate::config::{self, ExperimentConfig, LoadedConfig};
use crate::dataset::{prepare, DatasetSummary, PreparedData};
use crate::results::{
    aggregate, read_results, robustness_text, summary_text, write_aggregates, write_epoch_log, write_results,
    AggregateRow, Outcome, ResultRow, AGGREGATE_FILE, RESULTS_FILE,
};
use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const EPOCH_LOG_FILE: &str = "epoch_log.csv";
pub const RELIABILITY_FILE: &str = "reliability.csv";
pub const SOFT_LABELS_FILE: &str = "soft_labels.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const ROBUSTNESS_FILE: &str = "robustness.txt";

/// Flags shared by every subcommand.
#[derive(Debug, Clone)]
pub struct CommonArgs {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: PathBuf,
    /// `section.key=value` patches applied after the file is read.
    pub overrides: Vec<String>,
    pub jobs: usize,
    /// Shorthand for `--set method.name=...`.
    pub method: Option<Method>,
}

impl CommonArgs {
    pub fn new(config: Option<PathBuf>, out: impl Into<PathBuf>) -> Self {
        Self {
            config,
            seed: None,
            out: out.into(),
            overrides: Vec::new(),
            jobs: 1,
            method: None,
        }
    }

    fn load(&self) -> Result<LoadedConfig, CliError> {
        let mut overrides = self.overrides.clone();
        if let Some(m) = self.method {
            overrides.push(format!("method.name=\"{m}\""));
        }
        config::load(self.config.as_deref(), &overrides)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CorruptionSummary {
    pub rate: f64,
    pub seed: u64,
    pub count: usize,
    pub indices_hash: String,
}

/// Everything needed to rerun a single training run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub run_id: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub train_config: TrainConfig,
    pub params: String,
    pub source_files: Vec<PathBuf>,
    pub dataset: DatasetSummary,
    pub corruption: Option<CorruptionSummary>,
    pub commits: usize,
    pub best_epoch: usize,
    pub started_unix_s: u64,
    pub finished_unix_s: u64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub row: ResultRow,
    pub out_dir: PathBuf,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn outcome(r: &TrainReport) -> Outcome {
    Outcome {
        last_acc: r.last_acc,
        best_acc: r.best_acc,
        ece: r.ece.ece,
        wall_time_s: r.wall_time_s,
    }
}

fn source_files(loaded: &LoadedConfig) -> Vec<PathBuf> {
    let d = &loaded.config.dataset;
    [&d.train, &d.test]
        .into_iter()
        .flatten()
        .map(|p| loaded.resolve(p))
        .collect()
}

fn create_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::runtime(format!("cannot create output directory {}: {e}", dir.display())))
}

/// Trains one configuration and writes the manifest, per-epoch log,
/// reliability bins, soft labels (LWR) and a one-row results table.
pub fn cmd_run(args: &CommonArgs) -> Result<RunOutput, CliError> {
    let loaded = args.load()?;
    let seed = loaded.resolve_seed(args.seed)?;
    let tc = loaded.train_config(seed)?;
    let data = prepare(&loaded)?;

    let started = unix_now();
    let report = train(&tc, &data.train, &data.test)?;
    let finished = unix_now();

    let row = ResultRow::new(&data.name, &tc, Ok(outcome(&report)));
    let mut resolved = loaded.config.clone();
    resolved.run.seed = Some(seed);
    let manifest = RunManifest {
        tool: "retrolearn",
        version: env!("CARGO_PKG_VERSION"),
        run_id: row.run_id.clone(),
        seed,
        config: resolved,
        train_config: tc.clone(),
        params: tc.provenance(),
        source_files: source_files(&loaded),
        dataset: data.summary(),
        corruption: report.corruption.as_ref().map(|c| CorruptionSummary {
            rate: c.rate,
            seed: c.seed,
            count: c.indices.len(),
            indices_hash: format!("{:016x}", c.indices_hash()),
        }),
        commits: report.commits,
        best_epoch: report.best_epoch,
        started_unix_s: started,
        finished_unix_s: finished,
        wall_time_s: report.wall_time_s,
    };

    create_out(&args.out)?;
    std::fs::write(args.out.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)? + "\n")?;
    write_epoch_log(&args.out.join(EPOCH_LOG_FILE), &report.epochs)?;
    reliability_export(&report.ece, &args.out.join(RELIABILITY_FILE))?;
    if let Some(store) = report.soft_labels.as_ref().filter(|s| s.has_active()) {
        store.write_csv(&args.out.join(SOFT_LABELS_FILE))?;
    }
    write_results(&args.out.join(RESULTS_FILE), std::slice::from_ref(&row))?;
    log::info!(
        "{}: last {:.2}% best {:.2}% ece {:.4}",
        row.run_id,
        100.0 * report.last_acc,
        100.0 * report.best_acc,
        report.ece.ece
    );
    Ok(RunOutput {
        row,
        out_dir: args.out.clone(),
    })
}

#[derive(Debug, Clone)]
pub struct TableOutput {
    pub rows: Vec<ResultRow>,
    pub aggregates: Vec<AggregateRow>,
    pub out_dir: PathBuf,
}

fn write_tables(out: &Path, rows: &[ResultRow], aggs: &[AggregateRow]) -> Result<(), CliError> {
    write_results(&out.join(RESULTS_FILE), rows)?;
    write_aggregates(&out.join(AGGREGATE_FILE), aggs)?;
    std::fs::write(out.join(SUMMARY_FILE), summary_text(aggs))?;
    Ok(())
}

fn write_run_logs(out: &Path, logs: &[(String, Vec<retrolearn::trainer::EpochRecord>)]) -> Result<(), CliError> {
    for (id, epochs) in logs {
        let dir = out.join("runs").join(id);
        create_out(&dir)?;
        write_epoch_log(&dir.join(EPOCH_LOG_FILE), epochs)?;
    }
    Ok(())
}

fn require_success(rows: &[ResultRow]) -> Result<(), CliError> {
    if rows.iter().any(ResultRow::ok) {
        Ok(())
    } else {
        Err(CliError::runtime(format!("all {} runs failed", rows.len())))
    }
}

fn seeds_for(args: &CommonArgs, configured: &[u64]) -> Result<Vec<u64>, CliError> {
    let seeds = match args.seed {
        Some(s) => vec![s],
        None => configured.to_vec(),
    };
    if seeds.is_empty() {
        return Err(CliError::config("seed list is empty"));
    }
    Ok(seeds)
}

/// Runs LWR over the `[sweep]` τ × k × seed grid, plus an STD reference
/// on the same seeds unless `sweep.baseline = false`.
pub fn cmd_sweep(args: &CommonArgs) -> Result<TableOutput, CliError> {
    let loaded = args.load()?;
    let sweep = &loaded.config.sweep;
    let seeds = seeds_for(args, &sweep.seeds)?;
    if sweep.taus.is_empty() || sweep.ks.is_empty() {
        return Err(CliError::config("sweep.taus and sweep.ks must be nonempty"));
    }
    if loaded.config.method.name != Method::Lwr {
        log::warn!("sweep varies τ and k, so it always trains LWR (config says {})", loaded.config.method.name);
    }
    let mut base = loaded.train_config(seeds[0])?;
    base.method = Method::Lwr;
    for &tau in &sweep.taus {
        for &k in &sweep.ks {
            TrainConfig {
                tau,
                interval: k,
                ..base.clone()
            }
            .validate()
            .map_err(|e| CliError::config(format!("sweep grid point tau={tau} k={k}: {e}")))?;
        }
    }
    let data = prepare(&loaded)?;

    let mut rows = Vec::new();
    let mut logs = Vec::new();
    if sweep.baseline {
        let configs: Vec<TrainConfig> = seeds
            .iter()
            .map(|&seed| TrainConfig {
                method: Method::Std,
                seed,
                ..base.clone()
            })
            .collect();
        collect(&data, &configs, run_many(&configs, &data.train, &data.test, args.jobs), &mut rows, &mut logs);
    }
    let grid = SweepGrid {
        taus: sweep.taus.clone(),
        intervals: sweep.ks.clone(),
        seeds,
    };
    let result = run_sweep(&base, &grid, &data.train, &data.test, args.jobs)?;
    for run in &result.runs {
        let o = run.outcome.as_ref().map(|s| Outcome {
            last_acc: s.last_acc,
            best_acc: s.best_acc,
            ece: s.ece,
            wall_time_s: s.wall_time_s,
        });
        let row = ResultRow::new(&data.name, &run.config, o.map_err(Clone::clone));
        if let Ok(s) = &run.outcome {
            logs.push((row.run_id.clone(), s.epochs.clone()));
        }
        rows.push(row);
    }
    finish_table(args, rows, logs, false)
}

fn collect(
    data: &PreparedData,
    configs: &[TrainConfig],
    reports: Vec<retrolearn::Result<TrainReport>>,
    rows: &mut Vec<ResultRow>,
    logs: &mut Vec<(String, Vec<retrolearn::trainer::EpochRecord>)>,
) {
    for (c, r) in configs.iter().zip(reports) {
        match r {
            Ok(r) => {
                let row = ResultRow::new(&data.name, c, Ok(outcome(&r)));
                logs.push((row.run_id.clone(), r.epochs));
                rows.push(row);
            }
            Err(e) => {
                log::warn!("run {} failed: {e}", crate::results::run_id(&data.name, c));
                rows.push(ResultRow::new(&data.name, c, Err(e.to_string())));
            }
        }
    }
}

fn finish_table(
    args: &CommonArgs,
    rows: Vec<ResultRow>,
    logs: Vec<(String, Vec<retrolearn::trainer::EpochRecord>)>,
    robustness: bool,
) -> Result<TableOutput, CliError> {
    let aggregates = aggregate(&rows);
    create_out(&args.out)?;
    write_tables(&args.out, &rows, &aggregates)?;
    write_run_logs(&args.out, &logs)?;
    if robustness {
        std::fs::write(args.out.join(ROBUSTNESS_FILE), robustness_text(&aggregates))?;
    }
    require_success(&rows)?;
    Ok(TableOutput {
        rows,
        aggregates,
        out_dir: args.out.clone(),
    })
}

/// Trains every `[robustness]` method at every label-noise rate and seed.
pub fn cmd_robustness(args: &CommonArgs) -> Result<TableOutput, CliError> {
    let loaded = args.load()?;
    let rb = &loaded.config.robustness;
    let seeds = seeds_for(args, &rb.seeds)?;
    if rb.methods.is_empty() || rb.rates.is_empty() {
        return Err(CliError::config("robustness.methods and robustness.rates must be nonempty"));
    }
    if let Some(r) = rb.rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(CliError::config(format!("noise rate {r} outside [0, 1]")));
    }
    let mut configs = Vec::new();
    for &method in &rb.methods {
        for &rate in &rb.rates {
            for &seed in &seeds {
                let mut c = loaded.train_config(seed)?;
                c.method = method;
                c.noise_rate = rate;
                c.validate().map_err(|e| CliError::config(e.to_string()))?;
                configs.push(c);
            }
        }
    }
    let data = prepare(&loaded)?;
    let reports = run_many(&configs, &data.train, &data.test, args.jobs);
    let mut rows = Vec::new();
    let mut logs = Vec::new();
    collect(&data, &configs, reports, &mut rows, &mut logs);
    finish_table(args, rows, logs, true)
}

/// Re-aggregates raw rows from `input`, or `<out>/results.csv` by default.
pub fn cmd_report(out: &Path, input: Option<&Path>) -> Result<Vec<AggregateRow>, CliError> {
    let src = input.map_or_else(|| out.join(RESULTS_FILE), Path::to_path_buf);
    let rows = read_results(&src)?;
    if rows.is_empty() {
        return Err(CliError::data(format!("{} has no rows", src.display())));
    }
    let aggs = aggregate(&rows);
    create_out(out)?;
    write_aggregates(&out.join(AGGREGATE_FILE), &aggs)?;
    std::fs::write(out.join(SUMMARY_FILE), summary_text(&aggs))?;
    let mut rates: Vec<u64> = rows.iter().map(|r| r.noise_rate.to_bits()).collect();
    rates.sort_unstable();
    rates.dedup();
    if rates.len() > 1 {
        std::fs::write(out.join(ROBUSTNESS_FILE), robustness_text(&aggs))?;
    }
    Ok(aggs)
}
