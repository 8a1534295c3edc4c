//! The training loop shared by every method, plus evaluation and sweeps.
//!
//! For `Method::Lwr` the first `k` epochs minimize plain cross-entropy; the
//! softened training logits are recorded every epoch and committed every
//! `k` epochs, after which the retrospection objective takes over with
//! weights from [`RetroSchedule`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{kernels, OptimizerConfig, Tape, Tensor};
use crate::data::{corrupt_labels, epoch_batches, BatchPlan, Corruption, LabeledDataset};
use crate::error::{precondition, Error, Result};
use crate::losses;
use crate::metrics::{self, EceReport};
use crate::model::{Activation, Mlp, MlpSpec};
use crate::retrospection::{RetroSchedule, SoftLabelStore, Weighting};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "STD", alias = "std")]
    Std,
    #[serde(rename = "LSR", alias = "lsr")]
    Lsr,
    #[serde(rename = "MaxEntropy", alias = "max_entropy", alias = "maxent")]
    MaxEntropy,
    #[serde(rename = "LWR", alias = "lwr")]
    Lwr,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Std => "STD",
            Method::Lsr => "LSR",
            Method::MaxEntropy => "MaxEntropy",
            Method::Lwr => "LWR",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "std" => Ok(Method::Std),
            "lsr" => Ok(Method::Lsr),
            "maxentropy" | "max_entropy" | "max-entropy" | "maxent" | "max-h" => Ok(Method::MaxEntropy),
            "lwr" => Ok(Method::Lwr),
            other => Err(precondition(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub method: Method,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub zero_output_layer: bool,
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
    pub batch_size: usize,
    /// Soft-label temperature (LWR only).
    pub tau: f64,
    /// Epochs between soft-label snapshots (LWR only).
    pub interval: usize,
    /// Constant `(alpha, beta)` instead of the linear schedule (LWR only).
    pub fixed_weights: Option<(f64, f64)>,
    pub lsr_epsilon: f64,
    pub max_entropy_lambda: f64,
    pub seed: u64,
    /// Fraction of training labels redrawn at random before training.
    pub noise_rate: f64,
    pub eval_every: usize,
    pub ece_bins: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::Std,
            hidden: vec![128, 128],
            activation: Activation::Relu,
            zero_output_layer: false,
            optimizer: OptimizerConfig::adam_default(),
            epochs: 50,
            batch_size: 16,
            tau: 5.0,
            interval: 5,
            fixed_weights: None,
            lsr_epsilon: 0.1,
            max_entropy_lambda: 0.1,
            seed: 0,
            noise_rate: 0.0,
            eval_every: 1,
            ece_bins: metrics::DEFAULT_BINS,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.eval_every == 0 || self.ece_bins == 0 {
            return Err(precondition("epochs, batch_size, eval_every and ece_bins must be ≥ 1"));
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return Err(precondition(format!("noise_rate {} outside [0, 1]", self.noise_rate)));
        }
        match self.method {
            Method::Lwr => {
                if !(self.tau > 0.0) {
                    return Err(precondition(format!("LWR needs tau > 0, got {}", self.tau)));
                }
                if self.interval == 0 {
                    return Err(precondition("LWR needs an interval k ≥ 1"));
                }
                if self.interval > self.epochs {
                    log::warn!(
                        "interval k={} exceeds epochs M={}: no snapshot will be taken",
                        self.interval,
                        self.epochs
                    );
                }
            }
            Method::Lsr if !(0.0..1.0).contains(&self.lsr_epsilon) => {
                return Err(precondition(format!("lsr_epsilon {} outside [0, 1)", self.lsr_epsilon)));
            }
            Method::MaxEntropy if !(self.max_entropy_lambda >= 0.0) => {
                return Err(precondition("max_entropy_lambda must be ≥ 0"));
            }
            _ => {}
        }
        Ok(())
    }

    fn schedule(&self) -> Result<RetroSchedule> {
        let weighting = match self.fixed_weights {
            Some((alpha, beta)) => Weighting::Fixed { alpha, beta },
            None => Weighting::Linear,
        };
        RetroSchedule::with_weighting(self.interval, self.epochs, weighting)
    }

    /// Compact `key=value;...` rendering of every hyperparameter.
    pub fn provenance(&self) -> String {
        let opt = match self.optimizer {
            OptimizerConfig::SgdMomentum {
                lr,
                momentum,
                weight_decay,
            } => format!("optimizer=sgd_momentum;lr={lr};momentum={momentum};weight_decay={weight_decay}"),
            OptimizerConfig::Adam { lr, beta1, beta2, eps } => {
                format!("optimizer=adam;lr={lr};beta1={beta1};beta2={beta2};eps={eps}")
            }
        };
        let hidden: Vec<String> = self.hidden.iter().map(usize::to_string).collect();
        let weights = match self.fixed_weights {
            Some((a, b)) => format!("fixed:{a}/{b}"),
            None => "linear".into(),
        };
        format!(
            "method={};hidden={};activation=relu;init=kaiming_uniform;zero_output_layer={};{opt};epochs={};batch={};tau={};k={};weights={weights};lsr_epsilon={};max_entropy_lambda={};seed={};noise_rate={};eval_every={};ece_bins={}",
            self.method,
            hidden.join("x"),
            self.zero_output_layer,
            self.epochs,
            self.batch_size,
            self.tau,
            self.interval,
            self.lsr_epsilon,
            self.max_entropy_lambda,
            self.seed,
            self.noise_rate,
            self.eval_every,
            self.ece_bins
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    /// `None` on epochs skipped by `eval_every`.
    pub test_acc: Option<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub committed: bool,
}

/// Loss of one optimizer step, with the retrospection decomposition when it applies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub batch: usize,
    pub total: f64,
    pub ce: f64,
    /// `KL(s ∥ σ(z/τ))` for LWR steps supervised by soft labels.
    pub kl: Option<f64>,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub predictions: Vec<usize>,
    pub confidences: Vec<f64>,
    pub correct: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub epochs: Vec<EpochRecord>,
    pub steps: Vec<StepRecord>,
    pub last_acc: f64,
    pub best_acc: f64,
    pub best_epoch: usize,
    pub commits: usize,
    pub final_eval: Evaluation,
    pub ece: EceReport,
    pub corruption: Option<Corruption>,
    pub wall_time_s: f64,
    pub model: Mlp,
    pub soft_labels: Option<SoftLabelStore>,
}

/// Accuracy and winning-softmax confidences at temperature 1.
pub fn evaluate(model: &Mlp, ds: &LabeledDataset) -> Result<Evaluation> {
    let logits = model.logits(&ds.features_tensor())?;
    let c = model.num_classes();
    let probs = kernels::softmax_rows(logits.data(), c, 1.0);
    let mut predictions = Vec::with_capacity(ds.len());
    let mut confidences = Vec::with_capacity(ds.len());
    for row in probs.chunks_exact(c) {
        let j = kernels::argmax(row);
        predictions.push(j);
        confidences.push(row[j].clamp(0.0, 1.0));
    }
    let correct: Vec<bool> = predictions.iter().zip(ds.labels()).map(|(p, y)| p == y).collect();
    Ok(Evaluation {
        accuracy: metrics::accuracy(&predictions, ds.labels())?,
        predictions,
        confidences,
        correct,
    })
}

fn now() -> Option<std::time::Instant> {
    #[cfg(not(target_arch = "wasm32"))]
    {
        Some(std::time::Instant::now())
    }
    #[cfg(target_arch = "wasm32")]
    {
        None
    }
}

/// Seed stream for label corruption, kept apart from init and batching.
fn corruption_seed(seed: u64) -> u64 {
    seed ^ 0x5eed_c0de_0bad_1abe
}

pub fn train(config: &TrainConfig, train_ds: &LabeledDataset, test_ds: &LabeledDataset) -> Result<TrainReport> {
    config.validate()?;
    if train_ds.num_features() != test_ds.num_features() || train_ds.num_classes() != test_ds.num_classes() {
        return Err(Error::Dataset(format!(
            "train is {}D/{} classes but test is {}D/{} classes",
            train_ds.num_features(),
            train_ds.num_classes(),
            test_ds.num_features(),
            test_ds.num_classes()
        )));
    }
    let started = now();

    let (train_ds, corruption) = if config.noise_rate > 0.0 {
        let (ds, rec) = corrupt_labels(train_ds, config.noise_rate, corruption_seed(config.seed))?;
        (std::borrow::Cow::Owned(ds), Some(rec))
    } else {
        (std::borrow::Cow::Borrowed(train_ds), None)
    };
    let train_ds = train_ds.as_ref();

    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = Mlp::new(
        MlpSpec {
            input_dim: train_ds.num_features(),
            hidden: config.hidden.clone(),
            num_classes: train_ds.num_classes(),
            activation: config.activation,
            zero_output_layer: config.zero_output_layer,
        },
        &mut init_rng,
    )?;
    let mut optimizer = config.optimizer.build(model.params());
    let mut plan = BatchPlan::new(config.seed, config.batch_size)?;

    let lwr = config.method == Method::Lwr;
    let schedule = if lwr { Some(config.schedule()?) } else { None };
    let mut store = if lwr {
        Some(SoftLabelStore::new(train_ds.len(), train_ds.num_classes())?)
    } else {
        None
    };

    let mut epochs = Vec::with_capacity(config.epochs);
    let mut steps = Vec::new();
    let mut best = (f64::NEG_INFINITY, 0usize);
    let mut last_acc = 0.0;

    for epoch in 1..=config.epochs {
        let (alpha, beta) = match &schedule {
            Some(s) => s.alpha_beta(epoch)?,
            None => (1.0, 0.0),
        };
        let mut loss_sum = 0.0;
        let mut hits = 0usize;
        for (bi, batch) in epoch_batches(&mut plan, train_ds).into_iter().enumerate() {
            let mut tape = Tape::new();
            let bound = model.params().bind(&mut tape);
            let x = tape.constant(batch.features);
            let z = model.forward(&mut tape, &bound, x)?;

            let (loss, ce_value, kl_value) = match config.method {
                Method::Std => {
                    let l = losses::cross_entropy(&mut tape, z, &batch.labels)?;
                    (l, tape.value(l).data()[0], None)
                }
                Method::Lsr => {
                    let l = losses::lsr_loss(&mut tape, z, &batch.labels, config.lsr_epsilon)?;
                    (l, tape.value(l).data()[0], None)
                }
                Method::MaxEntropy => {
                    let l = losses::max_entropy_loss(&mut tape, z, &batch.labels, config.max_entropy_lambda)?;
                    (l, tape.value(l).data()[0], None)
                }
                Method::Lwr => {
                    let soft = store.as_ref().expect("lwr store").get_soft_labels(&batch.ids)?;
                    match soft {
                        None => {
                            let l = losses::cross_entropy(&mut tape, z, &batch.labels)?;
                            (l, tape.value(l).data()[0], None)
                        }
                        Some(s) => {
                            let stored = tape.constant(s);
                            let terms =
                                losses::lwr_loss(&mut tape, z, &batch.labels, stored, config.tau, alpha, beta)?;
                            (
                                terms.total,
                                tape.value(terms.ce).data()[0],
                                Some(tape.value(terms.kl).data()[0]),
                            )
                        }
                    }
                }
            };
            let total = tape.value(loss).data()[0];
            if !total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: bi,
                    total,
                    ce: ce_value,
                    retro: kl_value,
                });
            }
            steps.push(StepRecord {
                epoch,
                batch: bi,
                total,
                ce: ce_value,
                kl: kl_value,
                alpha,
                beta,
            });

            let logits = tape.value(z).clone();
            tape.backward(loss)?;
            model.params_mut().collect_grads(&tape, &bound)?;
            optimizer.step(model.params_mut())?;

            if let Some(store) = store.as_mut() {
                store.record_pending(&batch.ids, &logits, config.tau)?;
            }
            let n = batch.ids.len();
            loss_sum += total * n as f64;
            hits += logits
                .data()
                .chunks_exact(train_ds.num_classes())
                .zip(&batch.labels)
                .filter(|(row, &y)| kernels::argmax(row) == y)
                .count();
        }

        let committed = match store.as_mut() {
            Some(store) => store.commit_if_due(epoch, config.interval)?,
            None => false,
        };

        let test_acc = if epoch % config.eval_every == 0 || epoch == config.epochs {
            let acc = evaluate(&model, test_ds)?.accuracy;
            if acc > best.0 {
                best = (acc, epoch);
            }
            last_acc = acc;
            Some(acc)
        } else {
            None
        };
        epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train_ds.len() as f64,
            train_acc: hits as f64 / train_ds.len() as f64,
            test_acc,
            alpha,
            beta,
            committed,
        });
    }

    let final_eval = evaluate(&model, test_ds)?;
    let ece = metrics::compute_ece(&final_eval.confidences, &final_eval.correct, config.ece_bins)?;
    let wall_time_s = started.map_or(0.0, |t| t.elapsed().as_secs_f64());
    Ok(TrainReport {
        config: config.clone(),
        commits: store.as_ref().map_or(0, SoftLabelStore::snapshot_index),
        epochs,
        steps,
        last_acc,
        best_acc: best.0,
        best_epoch: best.1,
        final_eval,
        ece,
        corruption,
        wall_time_s,
        model,
        soft_labels: store,
    })
}

/// Mean and population standard deviation over runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                n,
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        Self {
            n,
            mean,
            std: var.sqrt(),
        }
    }
}

/// The Cartesian grid of a τ/k sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub taus: Vec<f64>,
    pub intervals: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl SweepGrid {
    /// Drops repeated values (keeping first occurrences) with a warning.
    pub fn deduplicated(&self) -> Self {
        fn dedup<T: PartialEq + Copy + std::fmt::Debug>(name: &str, xs: &[T]) -> Vec<T> {
            let mut out: Vec<T> = Vec::with_capacity(xs.len());
            for &x in xs {
                if out.contains(&x) {
                    log::warn!("duplicate {name} value {x:?} in sweep grid ignored");
                } else {
                    out.push(x);
                }
            }
            out
        }
        Self {
            taus: dedup("tau", &self.taus),
            intervals: dedup("k", &self.intervals),
            seeds: dedup("seed", &self.seeds),
        }
    }

    pub fn points(&self) -> Vec<(f64, usize, u64)> {
        let mut pts = Vec::new();
        for &tau in &self.taus {
            for &k in &self.intervals {
                for &seed in &self.seeds {
                    pts.push((tau, k, seed));
                }
            }
        }
        pts
    }
}

/// Headline numbers of one finished run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub last_acc: f64,
    pub best_acc: f64,
    pub best_epoch: usize,
    pub ece: f64,
    pub wall_time_s: f64,
    pub epochs: Vec<EpochRecord>,
}

impl From<&TrainReport> for RunSummary {
    fn from(r: &TrainReport) -> Self {
        Self {
            last_acc: r.last_acc,
            best_acc: r.best_acc,
            best_epoch: r.best_epoch,
            ece: r.ece.ece,
            wall_time_s: r.wall_time_s,
            epochs: r.epochs.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub tau: f64,
    pub interval: usize,
    pub seed: u64,
    pub config: TrainConfig,
    pub outcome: std::result::Result<RunSummary, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub tau: f64,
    pub interval: usize,
    pub last: Aggregate,
    pub best: Aggregate,
    pub ece: Aggregate,
    pub failures: usize,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub runs: Vec<SweepRun>,
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    /// Cell with the highest mean last-epoch accuracy.
    pub fn best_cell(&self) -> Option<&SweepCell> {
        self.cells
            .iter()
            .filter(|c| c.last.n > 0)
            .max_by(|a, b| a.last.mean.total_cmp(&b.last.mean))
    }
}

/// Runs every `(τ, k, seed)` of the grid on `jobs` worker threads. Runs
/// share only the read-only datasets; a failed run is recorded and the
/// sweep continues.
pub fn run_sweep(
    base: &TrainConfig,
    grid: &SweepGrid,
    train_ds: &LabeledDataset,
    test_ds: &LabeledDataset,
    jobs: usize,
) -> Result<SweepResult> {
    let grid = grid.deduplicated();
    let points = grid.points();
    if points.is_empty() {
        return Err(precondition("sweep grid is empty"));
    }
    let configs: Vec<TrainConfig> = points
        .iter()
        .map(|&(tau, k, seed)| TrainConfig {
            tau,
            interval: k,
            seed,
            ..base.clone()
        })
        .collect();
    let outcomes = run_many(&configs, train_ds, test_ds, jobs);

    let runs: Vec<SweepRun> = points
        .iter()
        .zip(configs)
        .zip(outcomes)
        .map(|((&(tau, interval, seed), config), outcome)| SweepRun {
            tau,
            interval,
            seed,
            config,
            outcome: outcome.map(|r| RunSummary::from(&r)).map_err(|e| e.to_string()),
        })
        .collect();

    let mut cells = Vec::new();
    for &tau in &grid.taus {
        for &interval in &grid.intervals {
            let ok: Vec<&RunSummary> = runs
                .iter()
                .filter(|r| r.tau == tau && r.interval == interval)
                .filter_map(|r| r.outcome.as_ref().ok())
                .collect();
            let total = runs.iter().filter(|r| r.tau == tau && r.interval == interval).count();
            let pick = |f: fn(&RunSummary) -> f64| Aggregate::of(&ok.iter().map(|s| f(s)).collect::<Vec<_>>());
            cells.push(SweepCell {
                tau,
                interval,
                last: pick(|s| s.last_acc),
                best: pick(|s| s.best_acc),
                ece: pick(|s| s.ece),
                failures: total - ok.len(),
            });
        }
    }
    Ok(SweepResult { runs, cells })
}

/// Trains each config, in order of `configs`, on up to `jobs` threads.
pub fn run_many(
    configs: &[TrainConfig],
    train_ds: &LabeledDataset,
    test_ds: &LabeledDataset,
    jobs: usize,
) -> Vec<Result<TrainReport>> {
    let jobs = jobs.max(1).min(configs.len().max(1));
    if jobs == 1 {
        return configs.iter().map(|c| train(c, train_ds, test_ds)).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<Option<Result<TrainReport>>>> =
        configs.iter().map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= configs.len() {
                    break;
                }
                let r = train(&configs[i], train_ds, test_ds);
                *slots[i].lock().expect("slot lock") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().expect("slot lock").expect("every slot filled"))
        .collect()
}

/// Logits of a model on a dataset, for callers that need raw outputs.
pub fn predict_logits(model: &Mlp, ds: &LabeledDataset) -> Result<Tensor> {
    model.logits(&ds.features_tensor())
}
