//! First-order optimizers. Each owns per-parameter state shaped like the
//! parameters it was created for.

use serde::{Deserialize, Serialize};

use super::params::ParameterSet;
use crate::error::{contract, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerConfig {
    SgdMomentum {
        lr: f64,
        momentum: f64,
        weight_decay: f64,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl OptimizerConfig {
    pub fn adam_default() -> Self {
        OptimizerConfig::Adam {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn build(&self, params: &ParameterSet) -> Optimizer {
        match *self {
            OptimizerConfig::SgdMomentum {
                lr,
                momentum,
                weight_decay,
            } => Optimizer::Sgd(SgdMomentum::new(params, lr, momentum, weight_decay)),
            OptimizerConfig::Adam { lr, beta1, beta2, eps } => {
                Optimizer::Adam(Adam::new(params, lr, beta1, beta2, eps))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd(SgdMomentum),
    Adam(Adam),
}

impl Optimizer {
    pub fn step(&mut self, params: &mut ParameterSet) -> Result<()> {
        match self {
            Optimizer::Sgd(o) => o.step(params),
            Optimizer::Adam(o) => o.step(params),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        match self {
            Optimizer::Sgd(o) => o.step,
            Optimizer::Adam(o) => o.step,
        }
    }
}

fn check_layout(state: &[Vec<f64>], params: &ParameterSet) -> Result<()> {
    if state.len() != params.len()
        || state.iter().zip(params.iter()).any(|(s, p)| s.len() != p.value.len())
    {
        return Err(contract("optimizer state does not match the parameter set"));
    }
    params.require_grads()
}

/// Classical heavy-ball SGD with L2 weight decay folded into the gradient:
///
/// ```text
/// v ← momentum·v + (g + weight_decay·θ)
/// θ ← θ − lr·v
/// ```
#[derive(Debug, Clone)]
pub struct SgdMomentum {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Vec<f64>>,
    step: u64,
}

impl SgdMomentum {
    pub fn new(params: &ParameterSet, lr: f64, momentum: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            momentum,
            weight_decay,
            velocity: params.iter().map(|p| vec![0.0; p.value.len()]).collect(),
            step: 0,
        }
    }

    pub fn step(&mut self, params: &mut ParameterSet) -> Result<()> {
        check_layout(&self.velocity, params)?;
        for (p, v) in params.iter_mut().zip(&mut self.velocity) {
            let grad = p.grad.as_ref().expect("checked").data().to_vec();
            for ((theta, vel), g) in p.value.data_mut().iter_mut().zip(v.iter_mut()).zip(grad) {
                *vel = self.momentum * *vel + (g + self.weight_decay * *theta);
                *theta -= self.lr * *vel;
            }
        }
        self.step += 1;
        Ok(())
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl Adam {
    pub fn new(params: &ParameterSet, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros = || params.iter().map(|p| vec![0.0; p.value.len()]).collect::<Vec<_>>();
        Self {
            lr,
            beta1,
            beta2,
            eps,
            first: zeros(),
            second: zeros(),
            step: 0,
        }
    }

    pub fn step(&mut self, params: &mut ParameterSet) -> Result<()> {
        check_layout(&self.first, params)?;
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            let grad = p.grad.as_ref().expect("checked").data().to_vec();
            for (((theta, mi), vi), g) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(m.iter_mut())
                .zip(v.iter_mut())
                .zip(grad)
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *theta -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
