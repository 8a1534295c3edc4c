//! Fully-connected ReLU classifier.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{kernels, ParameterSet, Tape, Tensor, Var};
use crate::error::{precondition, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
}

/// Layer widths and init policy. Weights are drawn from
/// `U(−√(6/fan_in), √(6/fan_in))`; biases start at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub num_classes: usize,
    pub activation: Activation,
    /// Start the output layer at exactly zero (uniform predictions).
    pub zero_output_layer: bool,
}

#[derive(Debug, Clone)]
pub struct Mlp {
    spec: MlpSpec,
    params: ParameterSet,
}

impl Mlp {
    pub fn new<R: Rng>(spec: MlpSpec, rng: &mut R) -> Result<Self> {
        if spec.input_dim == 0 || spec.num_classes == 0 || spec.hidden.contains(&0) {
            return Err(precondition(format!("MLP widths must be positive: {spec:?}")));
        }
        let widths = spec.widths();
        let mut params = ParameterSet::new();
        let layers = widths.len() - 1;
        for (l, pair) in widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let is_output = l + 1 == layers;
            let bound = (6.0 / fan_in as f64).sqrt();
            let w: Vec<f64> = if is_output && spec.zero_output_layer {
                vec![0.0; fan_in * fan_out]
            } else {
                (0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)).collect()
            };
            params.push(format!("layer{l}.weight"), Tensor::new(vec![fan_in, fan_out], w)?);
            params.push(format!("layer{l}.bias"), Tensor::zeros(&[fan_out]));
        }
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    /// Records the forward pass `z = f(θ, x)` on `tape` using parameter vars
    /// from [`ParameterSet::bind`]. Returns logits.
    pub fn forward(&self, tape: &mut Tape, bound: &[Var], x: Var) -> Result<Var> {
        forward_on_tape(tape, bound, x)
    }

    /// Tape-free logits for inference; same arithmetic as [`Mlp::forward`].
    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        let (rows, mut width) = x.dims2()?;
        let mut h = x.data().to_vec();
        let n_layers = self.params.len() / 2;
        for l in 0..n_layers {
            let w = &self.params.get(2 * l).value;
            let b = &self.params.get(2 * l + 1).value;
            let (inp, out) = w.dims2()?;
            if inp != width {
                return Err(crate::Error::Shape {
                    op: "linear",
                    left: vec![rows, width],
                    right: w.shape().to_vec(),
                });
            }
            h = kernels::affine(&h, w.data(), b.data(), rows, inp, out);
            if l + 1 < n_layers {
                h.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            width = out;
        }
        Tensor::new(vec![rows, width], h)
    }
}

/// The forward pass shared by training and gradient checks: alternating
/// `(weight, bias)` vars with ReLU between layers.
pub fn forward_on_tape(tape: &mut Tape, bound: &[Var], x: Var) -> Result<Var> {
    let n_layers = bound.len() / 2;
    let mut h = x;
    for l in 0..n_layers {
        h = tape.affine(h, bound[2 * l], bound[2 * l + 1])?;
        if l + 1 < n_layers {
            h = tape.relu(h);
        }
    }
    Ok(h)
}

impl MlpSpec {
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input_dim);
        w.extend(&self.hidden);
        w.push(self.num_classes);
        w
    }
}
