//! Experiment configuration: a TOML file with `dataset`, `model`,
//! `optimizer`, `method` and `run` sections (plus `sweep` and `robustness`
//! for those commands), patched by dotted `--set key=value` overrides.

use std::path::{Path, PathBuf};

use retrolearn::autodiff::OptimizerConfig;
use retrolearn::data::{CsvOptions, LabelColumn};
use retrolearn::model::Activation;
use retrolearn::trainer::{Method, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable consulted when neither `--seed` nor `run.seed` is set.
pub const SEED_ENV: &str = "RETROLEARN_SEED";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub optimizer: OptimizerSection,
    pub method: MethodConfig,
    pub run: RunConfig,
    pub sweep: SweepConfig,
    pub robustness: RobustnessConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Csv,
    Blobs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    /// Label written to results rows; defaults to the train file stem.
    pub name: Option<String>,
    pub kind: DatasetKind,
    /// Relative paths resolve against the config file's directory.
    pub train: Option<PathBuf>,
    /// Without a test file the train file is split with `test_fraction`.
    pub test: Option<PathBuf>,
    pub label: LabelColumn,
    pub has_header: bool,
    pub delimiter: char,
    pub test_fraction: f64,
    pub split_seed: u64,
    pub normalize: bool,
    pub n_per_class: usize,
    pub classes: usize,
    pub dims: usize,
    pub separation: f64,
    pub blob_seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            name: None,
            kind: DatasetKind::Csv,
            train: None,
            test: None,
            label: LabelColumn::default(),
            has_header: true,
            delimiter: ',',
            test_fraction: 0.2,
            split_seed: 0,
            normalize: false,
            n_per_class: 500,
            classes: 10,
            dims: 20,
            separation: 4.0,
            blob_seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn csv_options(&self) -> Result<CsvOptions, CliError> {
        if !self.delimiter.is_ascii() {
            return Err(CliError::config(format!(
                "dataset.delimiter must be a single ASCII character, got {:?}",
                self.delimiter
            )));
        }
        Ok(CsvOptions {
            label: self.label.clone(),
            has_header: self.has_header,
            delimiter: self.delimiter as u8,
        })
    }

    pub fn display_name(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        match (self.kind, &self.train) {
            (DatasetKind::Blobs, _) => "blobs".into(),
            (DatasetKind::Csv, Some(p)) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into()),
            (DatasetKind::Csv, None) => "dataset".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub zero_output_layer: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128],
            activation: Activation::Relu,
            zero_output_layer: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    SgdMomentum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub kind: OptimizerKind,
    /// Defaults to 1e-3 for Adam and 0.1 for SGD.
    pub lr: Option<f64>,
    pub momentum: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr: None,
            momentum: 0.9,
            weight_decay: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl OptimizerSection {
    pub fn build(&self) -> OptimizerConfig {
        match self.kind {
            OptimizerKind::Adam => OptimizerConfig::Adam {
                lr: self.lr.unwrap_or(1e-3),
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.eps,
            },
            OptimizerKind::SgdMomentum => OptimizerConfig::SgdMomentum {
                lr: self.lr.unwrap_or(0.1),
                momentum: self.momentum,
                weight_decay: self.weight_decay,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MethodConfig {
    pub name: Method,
    pub tau: f64,
    pub k: usize,
    /// Setting both replaces the linear α/β schedule with constants.
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub lsr_epsilon: f64,
    pub max_entropy_lambda: f64,
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self {
            name: Method::Std,
            tau: 5.0,
            k: 5,
            alpha: None,
            beta: None,
            lsr_epsilon: 0.1,
            max_entropy_lambda: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub epochs: usize,
    pub batch: usize,
    pub seed: Option<u64>,
    pub noise_rate: f64,
    pub eval_every: usize,
    pub ece_bins: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch: 16,
            seed: None,
            noise_rate: 0.0,
            eval_every: 1,
            ece_bins: retrolearn::metrics::DEFAULT_BINS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub taus: Vec<f64>,
    pub ks: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Also train STD on the same seeds as a reference row.
    pub baseline: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            taus: vec![2.0, 5.0, 10.0],
            ks: vec![1, 5],
            seeds: vec![0, 1, 2],
            baseline: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobustnessConfig {
    pub methods: Vec<Method>,
    pub rates: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::Std, Method::Lwr],
            rates: vec![0.2, 0.4, 0.6, 0.8],
            seeds: vec![0, 1, 2],
        }
    }
}

/// A parsed config plus the directory its relative paths resolve against.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
    /// Dotted keys explicitly present in the file or overrides.
    pub explicit_keys: Vec<String>,
}

impl LoadedConfig {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn is_explicit(&self, key: &str) -> bool {
        self.explicit_keys.iter().any(|k| k == key)
    }

    /// Seed precedence: `--seed`, then `run.seed`, then `RETROLEARN_SEED`, then 0.
    pub fn resolve_seed(&self, flag: Option<u64>) -> Result<u64, CliError> {
        if let Some(s) = flag.or(self.config.run.seed) {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| CliError::config(format!("{SEED_ENV}={v:?} is not a nonnegative integer"))),
            Err(_) => Ok(0),
        }
    }

    /// The trainer's view of this config for one seed.
    pub fn train_config(&self, seed: u64) -> Result<TrainConfig, CliError> {
        let c = &self.config;
        let fixed_weights = match (c.method.alpha, c.method.beta) {
            (Some(a), Some(b)) => Some((a, b)),
            (None, None) => None,
            _ => return Err(CliError::config("method.alpha and method.beta must be set together")),
        };
        if c.method.name != Method::Lwr {
            let ignored: Vec<&str> = ["method.tau", "method.k", "method.alpha", "method.beta"]
                .into_iter()
                .filter(|k| self.is_explicit(k))
                .collect();
            if !ignored.is_empty() {
                log::warn!("method is {}: {} ignored", c.method.name, ignored.join(", "));
            }
        }
        let tc = TrainConfig {
            method: c.method.name,
            hidden: c.model.hidden.clone(),
            activation: c.model.activation,
            zero_output_layer: c.model.zero_output_layer,
            optimizer: c.optimizer.build(),
            epochs: c.run.epochs,
            batch_size: c.run.batch,
            tau: c.method.tau,
            interval: c.method.k,
            fixed_weights,
            lsr_epsilon: c.method.lsr_epsilon,
            max_entropy_lambda: c.method.max_entropy_lambda,
            seed,
            noise_rate: c.run.noise_rate,
            eval_every: c.run.eval_every,
            ece_bins: c.run.ece_bins,
        };
        tc.validate().map_err(|e| CliError::config(e.to_string()))?;
        Ok(tc)
    }
}

/// Reads `path` (if any), applies `overrides` (`section.key=value`, value
/// parsed as a TOML literal and otherwise taken as a string), and
/// deserializes with unknown keys rejected.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<LoadedConfig, CliError> {
    let (mut table, base_dir) = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::config(format!("cannot read config {}: {e}", p.display())))?;
            let table: toml::Table = toml::from_str(&text)
                .map_err(|e| CliError::config(format!("{}: {e}", p.display())))?;
            let dir = p.parent().map(Path::to_path_buf).unwrap_or_default();
            (table, dir)
        }
        None => (toml::Table::new(), PathBuf::new()),
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let mut explicit_keys = Vec::new();
    collect_keys(&table, "", &mut explicit_keys);
    let source = path.map_or_else(|| "<overrides>".to_string(), |p| p.display().to_string());
    let config: ExperimentConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::config(format!("{source}: {}", e.message())))?;
    Ok(LoadedConfig {
        config,
        base_dir,
        explicit_keys,
    })
}

pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::config(format!("--set expects KEY=VALUE, got {spec:?}")))?;
    let key = key.trim();
    let path: Vec<&str> = key.split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(CliError::config(format!("--set has an empty key segment in {key:?}")));
    }
    let value = parse_value(raw.trim());
    let (last, parents) = path.split_last().expect("split yields one segment");
    let mut node = table;
    for seg in parents {
        let entry = node
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| CliError::config(format!("--set {key}: {seg} is not a section")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn collect_keys(table: &toml::Table, prefix: &str, out: &mut Vec<String>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        if let toml::Value::Table(t) = v {
            collect_keys(t, &key, out);
        } else {
            out.push(key);
        }
    }
}
