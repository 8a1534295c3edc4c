//! Browser bindings for the demo page in `www/`: soften a logit vector,
//! plot the α/β schedule, and train STD against LWR on noisy blobs.
//!
//! The `*_impl` functions hold the logic and are plain Rust so they can be
//! tested natively; the exported wrappers only convert errors.

use retrolearn::autodiff::Tensor;
use retrolearn::data::gaussian_blobs;
use retrolearn::losses::softmax_temperature;
use retrolearn::metrics::EceReport;
use retrolearn::retrospection::RetroSchedule;
use retrolearn::trainer::{train, Method, TrainConfig, TrainReport};
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

pub fn soften_impl(logits: &[f64], tau: f64) -> Result<Vec<f64>, String> {
    let t = Tensor::new(vec![1, logits.len()], logits.to_vec()).map_err(|e| e.to_string())?;
    Ok(softmax_temperature(&t, tau).map_err(|e| e.to_string())?.into_data())
}

/// `softmax(logits / tau)`.
#[wasm_bindgen]
pub fn soften(logits: Vec<f64>, tau: f64) -> Result<Vec<f64>, JsValue> {
    soften_impl(&logits, tau).map_err(js_err)
}

/// Per-epoch loss weights for interval `k` over `m` epochs.
#[wasm_bindgen]
pub struct Schedule {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    commit_epochs: Vec<u32>,
}

#[wasm_bindgen]
impl Schedule {
    #[wasm_bindgen(getter)]
    pub fn alpha(&self) -> Vec<f64> {
        self.alpha.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn beta(&self) -> Vec<f64> {
        self.beta.clone()
    }

    #[wasm_bindgen(getter, js_name = commitEpochs)]
    pub fn commit_epochs(&self) -> Vec<u32> {
        self.commit_epochs.clone()
    }
}

pub fn schedule_impl(k: usize, m: usize) -> Result<Schedule, String> {
    let s = RetroSchedule::new(k, m).map_err(|e| e.to_string())?;
    let mut alpha = Vec::with_capacity(m);
    let mut beta = Vec::with_capacity(m);
    for epoch in 1..=m {
        let (a, b) = s.alpha_beta(epoch).map_err(|e| e.to_string())?;
        alpha.push(a);
        beta.push(b);
    }
    let commit_epochs = (1..=m).filter(|e| e % k == 0).map(|e| e as u32).collect();
    Ok(Schedule {
        alpha,
        beta,
        commit_epochs,
    })
}

#[wasm_bindgen]
pub fn schedule(k: u32, m: u32) -> Result<Schedule, JsValue> {
    schedule_impl(k as usize, m as usize).map_err(js_err)
}

/// One trained model's curves and calibration.
#[derive(Debug, Clone)]
pub struct Trace {
    pub test_acc: Vec<f64>,
    pub last_acc: f64,
    pub best_acc: f64,
    pub ece: f64,
    /// Per-bin mean confidence and accuracy; NaN for empty bins.
    pub bin_conf: Vec<f64>,
    pub bin_acc: Vec<f64>,
    pub bin_count: Vec<u32>,
}

impl Trace {
    fn from_report(r: &TrainReport) -> Self {
        let EceReport { ece, reliability } = &r.ece;
        Self {
            test_acc: r.epochs.iter().map(|e| e.test_acc.unwrap_or(f64::NAN)).collect(),
            last_acc: r.last_acc,
            best_acc: r.best_acc,
            ece: *ece,
            bin_conf: reliability
                .bins
                .iter()
                .map(|b| b.mean_confidence.unwrap_or(f64::NAN))
                .collect(),
            bin_acc: reliability
                .bins
                .iter()
                .map(|b| b.mean_accuracy.unwrap_or(f64::NAN))
                .collect(),
            bin_count: reliability.bins.iter().map(|b| b.count as u32).collect(),
        }
    }
}

/// STD and LWR trained on the same noisy blobs with the same seed.
#[wasm_bindgen]
pub struct Comparison {
    std: Trace,
    lwr: Trace,
}

macro_rules! trace_getters {
    ($($name:ident, $js:literal, $field:ident, $side:ident, $ty:ty);* $(;)?) => {
        #[wasm_bindgen]
        impl Comparison {
            $(
                #[wasm_bindgen(getter, js_name = $js)]
                pub fn $name(&self) -> $ty {
                    self.$side.$field.clone()
                }
            )*
        }
    };
}

trace_getters! {
    std_curve, "stdCurve", test_acc, std, Vec<f64>;
    lwr_curve, "lwrCurve", test_acc, lwr, Vec<f64>;
    std_last, "stdLast", last_acc, std, f64;
    lwr_last, "lwrLast", last_acc, lwr, f64;
    std_best, "stdBest", best_acc, std, f64;
    lwr_best, "lwrBest", best_acc, lwr, f64;
    std_ece, "stdEce", ece, std, f64;
    lwr_ece, "lwrEce", ece, lwr, f64;
    std_bin_conf, "stdBinConf", bin_conf, std, Vec<f64>;
    lwr_bin_conf, "lwrBinConf", bin_conf, lwr, Vec<f64>;
    std_bin_acc, "stdBinAcc", bin_acc, std, Vec<f64>;
    lwr_bin_acc, "lwrBinAcc", bin_acc, lwr, Vec<f64>;
    std_bin_count, "stdBinCount", bin_count, std, Vec<u32>;
    lwr_bin_count, "lwrBinCount", bin_count, lwr, Vec<u32>;
}

impl Comparison {
    pub fn std_trace(&self) -> &Trace {
        &self.std
    }

    pub fn lwr_trace(&self) -> &Trace {
        &self.lwr
    }
}

/// Settings for the in-browser comparison; small enough to train in a
/// few seconds.
#[derive(Debug, Clone, Copy)]
pub struct CompareOptions {
    pub noise_rate: f64,
    pub tau: f64,
    pub k: usize,
    pub epochs: usize,
    pub seed: u64,
}

pub fn compare_impl(o: CompareOptions) -> Result<Comparison, String> {
    let (train_ds, test_ds) = gaussian_blobs(120, 5, 10, 4.0, o.seed).map_err(|e| e.to_string())?;
    let base = TrainConfig {
        hidden: vec![32, 32],
        optimizer: retrolearn::autodiff::OptimizerConfig::SgdMomentum {
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 0.0,
        },
        epochs: o.epochs,
        batch_size: 32,
        tau: o.tau,
        interval: o.k,
        seed: o.seed,
        noise_rate: o.noise_rate,
        ..TrainConfig::default()
    };
    let run = |method| {
        train(&TrainConfig { method, ..base.clone() }, &train_ds, &test_ds)
            .map(|r| Trace::from_report(&r))
            .map_err(|e| e.to_string())
    };
    Ok(Comparison {
        std: run(Method::Std)?,
        lwr: run(Method::Lwr)?,
    })
}

#[wasm_bindgen(js_name = compareOnBlobs)]
pub fn compare_on_blobs(noise_rate: f64, tau: f64, k: u32, epochs: u32, seed: u32) -> Result<Comparison, JsValue> {
    compare_impl(CompareOptions {
        noise_rate,
        tau,
        k: k as usize,
        epochs: epochs as usize,
        seed: u64::from(seed),
    })
    .map_err(js_err)
}
