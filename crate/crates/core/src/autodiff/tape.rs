//! Wengert-list reverse-mode differentiation.
//!
//! Every operation appends a node holding its forward value. `backward`
//! walks the list from the loss node down to index 0, so the traversal is
//! exactly the reverse of execution order.

use super::kernels;
use super::tensor::Tensor;
use crate::error::{contract, precondition, Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Affine { x: Var, w: Var, b: Var },
    Relu(Var),
    LogSoftmax { x: Var, tau: f64 },
    Exp(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Tensor>,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Registers an input tensor. Parameters use `requires_grad = true`.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// Copies `v`'s current value into a fresh constant: nothing downstream
    /// of the copy can send gradient back into `v`.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.needs(v)
    }

    /// `x · w + b` for `x: B×In`, `w: In×Out`, `b: Out`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (rows, inp) = self.value(x).dims2()?;
        let (w_in, out) = self.value(w).dims2()?;
        if w_in != inp {
            return Err(Error::Shape {
                op: "linear",
                left: self.value(x).shape().to_vec(),
                right: self.value(w).shape().to_vec(),
            });
        }
        if self.value(b).len() != out {
            return Err(Error::Shape {
                op: "linear bias",
                left: self.value(w).shape().to_vec(),
                right: self.value(b).shape().to_vec(),
            });
        }
        let y = kernels::affine(
            self.value(x).data(),
            self.value(w).data(),
            self.value(b).data(),
            rows,
            inp,
            out,
        );
        let rg = self.needs(x) || self.needs(w) || self.needs(b);
        Ok(self.push(Tensor::new(vec![rows, out], y)?, Op::Affine { x, w, b }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = self.value(x).map(|v| if v > 0.0 { v } else { 0.0 });
        let rg = self.needs(x);
        self.push(y, Op::Relu(x), rg)
    }

    /// Row-wise `log softmax(x / tau)` of a matrix.
    pub fn log_softmax(&mut self, x: Var, tau: f64) -> Result<Var> {
        if !(tau > 0.0) {
            return Err(precondition(format!("temperature must be positive, got {tau}")));
        }
        let (rows, cols) = self.value(x).dims2()?;
        let y = kernels::log_softmax_rows(self.value(x).data(), cols, tau);
        let rg = self.needs(x);
        Ok(self.push(Tensor::new(vec![rows, cols], y)?, Op::LogSoftmax { x, tau }, rg))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let y = self.value(x).map(f64::exp);
        let rg = self.needs(x);
        self.push(y, Op::Exp(x), rg)
    }

    fn zip_with(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::Shape {
                op: name,
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.zip_with(a, b, "add", |x, y| x + y)?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(y, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.zip_with(a, b, "sub", |x, y| x - y)?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(y, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.zip_with(a, b, "mul", |x, y| x * y)?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(y, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let y = self.value(a).map(|v| v * factor);
        let rg = self.needs(a);
        self.push(y, Op::Scale(a, factor), rg)
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.needs(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    fn accumulate(&mut self, target: Var, f: impl FnOnce(&mut [f64])) {
        if let Some(g) = self.nodes[target.0].grad.as_mut() {
            f(g.data_mut());
        }
    }

    /// Populates gradients of `loss` with respect to every node that requires
    /// them. All grads are reset first, so calling this twice after the same
    /// forward pass yields identical results.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        for node in &mut self.nodes {
            node.grad = node.requires_grad.then(|| Tensor::zeros(node.value.shape()));
        }
        if !self.needs(loss) {
            return Ok(());
        }
        self.accumulate(loss, |g| g[0] = 1.0);

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(upstream) = self.nodes[idx].grad.clone() else {
                continue;
            };
            let g = upstream.data();
            let op = self.nodes[idx].op.clone();
            match op {
                Op::Leaf => {}
                Op::Affine { x, w, b } => {
                    let (rows, inp) = self.value(x).dims2()?;
                    let out = self.value(b).len();
                    let xv = self.value(x).data().to_vec();
                    let wv = self.value(w).data().to_vec();
                    let mut gx = self.nodes[x.0].grad.take();
                    let mut gw = self.nodes[w.0].grad.take();
                    let mut gb = self.nodes[b.0].grad.take();
                    kernels::affine_backward(
                        &xv,
                        &wv,
                        g,
                        rows,
                        inp,
                        out,
                        gx.as_mut().map(Tensor::data_mut),
                        gw.as_mut().map(Tensor::data_mut),
                        gb.as_mut().map(Tensor::data_mut),
                    );
                    self.nodes[x.0].grad = gx;
                    self.nodes[w.0].grad = gw;
                    self.nodes[b.0].grad = gb;
                }
                Op::Relu(x) => {
                    let mask: Vec<bool> = self.value(x).data().iter().map(|&v| v > 0.0).collect();
                    self.accumulate(x, |gx| {
                        for ((gxv, &gv), &on) in gx.iter_mut().zip(g).zip(&mask) {
                            if on {
                                *gxv += gv;
                            }
                        }
                    });
                }
                Op::LogSoftmax { x, tau } => {
                    let (_, cols) = self.value(x).dims2()?;
                    let y = self.nodes[idx].value.data().to_vec();
                    self.accumulate(x, |gx| {
                        for ((gxr, gr), yr) in gx
                            .chunks_exact_mut(cols)
                            .zip(g.chunks_exact(cols))
                            .zip(y.chunks_exact(cols))
                        {
                            let total: f64 = gr.iter().sum();
                            for ((gxv, &gv), &lp) in gxr.iter_mut().zip(gr).zip(yr) {
                                *gxv += (gv - lp.exp() * total) / tau;
                            }
                        }
                    });
                }
                Op::Exp(x) => {
                    let y = self.nodes[idx].value.data().to_vec();
                    self.accumulate(x, |gx| {
                        for ((gxv, &gv), &yv) in gx.iter_mut().zip(g).zip(&y) {
                            *gxv += gv * yv;
                        }
                    });
                }
                Op::Add(a, b) => {
                    self.accumulate(a, |ga| ga.iter_mut().zip(g).for_each(|(d, &s)| *d += s));
                    self.accumulate(b, |gb| gb.iter_mut().zip(g).for_each(|(d, &s)| *d += s));
                }
                Op::Sub(a, b) => {
                    self.accumulate(a, |ga| ga.iter_mut().zip(g).for_each(|(d, &s)| *d += s));
                    self.accumulate(b, |gb| gb.iter_mut().zip(g).for_each(|(d, &s)| *d -= s));
                }
                Op::Mul(a, b) => {
                    let av = self.value(a).data().to_vec();
                    let bv = self.value(b).data().to_vec();
                    self.accumulate(a, |ga| {
                        for ((d, &s), &o) in ga.iter_mut().zip(g).zip(&bv) {
                            *d += s * o;
                        }
                    });
                    self.accumulate(b, |gb| {
                        for ((d, &s), &o) in gb.iter_mut().zip(g).zip(&av) {
                            *d += s * o;
                        }
                    });
                }
                Op::Scale(a, factor) => {
                    self.accumulate(a, |ga| ga.iter_mut().zip(g).for_each(|(d, &s)| *d += s * factor));
                }
                Op::Sum(a) => {
                    let s = g[0];
                    self.accumulate(a, |ga| ga.iter_mut().for_each(|d| *d += s));
                }
            }
        }
        Ok(())
    }
}
