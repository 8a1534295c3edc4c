//! Training objectives. Every loss is a batch mean and is recorded on a
//! [`Tape`] so it can be differentiated with respect to the logits.
//!
//! Argument order follows the `H(prediction, target)` convention: the
//! retrospection term `K(σ(z/τ), s)` is the divergence of the network's
//! softened prediction from the stored target `s`, i.e. `Σ s·(log s − log σ(z/τ))`,
//! which differs from `H(σ(z/τ), s)` only by the entropy of `s`.

use crate::autodiff::{kernels, Tape, Tensor, Var};
use crate::error::{contract, precondition, Error, Result};

/// Floor applied to stored probabilities before taking their log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Tolerance on `Σ p = 1` for [`ProbabilityVector`].
pub const SUM_TOLERANCE: f64 = 1e-9;

/// A validated distribution over classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        validate_row(&probs)?;
        Ok(Self(probs))
    }

    pub fn uniform(classes: usize) -> Self {
        Self(vec![1.0 / classes as f64; classes])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn entropy(&self) -> f64 {
        row_entropy(&self.0)
    }
}

fn validate_row(row: &[f64]) -> Result<()> {
    if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(contract(format!("probability entries must lie in [0, 1]: {row:?}")));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(contract(format!("probabilities sum to {sum}, not 1")));
    }
    Ok(())
}

/// Checks every row of a `B × C` matrix is a distribution.
pub fn validate_distributions(batch: &Tensor) -> Result<()> {
    let (_, c) = batch.dims2()?;
    batch.data().chunks_exact(c).try_for_each(validate_row)
}

fn row_entropy(row: &[f64]) -> f64 {
    -row.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
}

/// Row-wise `σ(z/τ)` with max subtraction.
pub fn softmax_temperature(logits: &Tensor, tau: f64) -> Result<Tensor> {
    if !(tau > 0.0) {
        return Err(precondition(format!("temperature must be positive, got {tau}")));
    }
    let (rows, cols) = logits.dims2()?;
    Tensor::new(vec![rows, cols], kernels::softmax_rows(logits.data(), cols, tau))
}

/// Per-row Shannon entropy (nats) of a batch of distributions.
pub fn entropy_rows(probs: &Tensor) -> Result<Vec<f64>> {
    let (_, c) = probs.dims2()?;
    Ok(probs.data().chunks_exact(c).map(row_entropy).collect())
}

/// Batch mean of `KL(p ∥ q) = Σ p·log(p / q)` with `0·log(0/q) = 0` and `q`
/// floored at [`PROB_FLOOR`].
pub fn kl_divergence(p: &Tensor, q: &Tensor) -> Result<f64> {
    if p.shape() != q.shape() {
        return Err(Error::Shape {
            op: "kl_divergence",
            left: p.shape().to_vec(),
            right: q.shape().to_vec(),
        });
    }
    let (rows, _) = p.dims2()?;
    let total: f64 = p
        .data()
        .iter()
        .zip(q.data())
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi.ln() - qi.max(PROB_FLOOR).ln()))
        .sum();
    Ok(total / rows as f64)
}

fn check_labels(labels: &[usize], rows: usize, classes: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::Shape {
            op: "labels",
            left: vec![rows],
            right: vec![labels.len()],
        });
    }
    match labels.iter().find(|&&y| y >= classes) {
        Some(y) => Err(contract(format!("class index {y} out of range for {classes} classes"))),
        None => Ok(()),
    }
}

/// `B × C` one-hot matrix for `labels`.
pub fn one_hot(labels: &[usize], classes: usize) -> Result<Tensor> {
    check_labels(labels, labels.len(), classes)?;
    let mut data = vec![0.0; labels.len() * classes];
    for (i, &y) in labels.iter().enumerate() {
        data[i * classes + y] = 1.0;
    }
    Tensor::new(vec![labels.len(), classes], data)
}

/// `−(1/B) Σ_i Σ_c target[i,c] · log σ(z_i/τ)[c]` for a constant `target`.
fn soft_cross_entropy(tape: &mut Tape, log_probs: Var, target: Tensor) -> Result<Var> {
    let rows = target.dims2()?.0;
    let t = tape.constant(target);
    let prod = tape.mul(t, log_probs)?;
    let s = tape.sum(prod);
    Ok(tape.scale(s, -1.0 / rows as f64))
}

/// `H(σ(z), y)` averaged over the batch, via log-sum-exp.
pub fn cross_entropy(tape: &mut Tape, logits: Var, labels: &[usize]) -> Result<Var> {
    let (rows, classes) = tape.value(logits).dims2()?;
    check_labels(labels, rows, classes)?;
    let log_probs = tape.log_softmax(logits, 1.0)?;
    soft_cross_entropy(tape, log_probs, one_hot(labels, classes)?)
}

/// The three pieces of the retrospection objective, kept separately so the
/// trainer can log the decomposition.
#[derive(Debug, Clone, Copy)]
pub struct LwrTerms {
    pub total: Var,
    pub ce: Var,
    pub kl: Var,
}

/// `α·H(σ(z), y) + β·τ²·K(σ(z/τ), s)`.
///
/// `stored` is detached before use, so no gradient ever reaches it.
pub fn lwr_loss(
    tape: &mut Tape,
    logits: Var,
    labels: &[usize],
    stored: Var,
    tau: f64,
    alpha: f64,
    beta: f64,
) -> Result<LwrTerms> {
    if !(tau > 0.0) {
        return Err(precondition(format!("temperature must be positive, got {tau}")));
    }
    if !(alpha >= 0.0 && beta >= 0.0) {
        return Err(precondition(format!("loss weights must be nonnegative: alpha={alpha}, beta={beta}")));
    }
    let z_shape = tape.value(logits).shape().to_vec();
    let s_shape = tape.value(stored).shape().to_vec();
    if z_shape != s_shape {
        return Err(Error::Shape {
            op: "lwr_loss",
            left: z_shape,
            right: s_shape,
        });
    }
    let (rows, classes) = tape.value(logits).dims2()?;
    check_labels(labels, rows, classes)?;

    let target = tape.detach(stored);
    let ce = cross_entropy(tape, logits, labels)?;
    let kl = retrospection_divergence(tape, logits, target, tau)?;
    let weighted_ce = tape.scale(ce, alpha);
    let weighted_kl = tape.scale(kl, beta * tau * tau);
    let total = tape.add(weighted_ce, weighted_kl)?;
    Ok(LwrTerms { total, ce, kl })
}

/// `(1/B) Σ_i Σ_c s[i,c]·(log s[i,c] − log σ(z_i/τ)[c])`, gradient through `z` only.
fn retrospection_divergence(tape: &mut Tape, logits: Var, target: Var, tau: f64) -> Result<Var> {
    let rows = tape.value(logits).dims2()?.0;
    let log_target = tape
        .value(target)
        .map(|s| if s > 0.0 { s.max(PROB_FLOOR).ln() } else { 0.0 });
    let log_target = tape.constant(log_target);
    let log_probs = tape.log_softmax(logits, tau)?;
    let diff = tape.sub(log_target, log_probs)?;
    let weighted = tape.mul(target, diff)?;
    let s = tape.sum(weighted);
    Ok(tape.scale(s, 1.0 / rows as f64))
}

/// Cross-entropy against `(1 − ε)·y + ε/C`.
pub fn lsr_loss(tape: &mut Tape, logits: Var, labels: &[usize], epsilon: f64) -> Result<Var> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(precondition(format!("smoothing epsilon must be in [0, 1), got {epsilon}")));
    }
    let (rows, classes) = tape.value(logits).dims2()?;
    check_labels(labels, rows, classes)?;
    let target = one_hot(labels, classes)?.map(|y| (1.0 - epsilon) * y + epsilon / classes as f64);
    let log_probs = tape.log_softmax(logits, 1.0)?;
    soft_cross_entropy(tape, log_probs, target)
}

/// `H(σ(z), y) − λ·Entropy(σ(z))`, batch mean.
pub fn max_entropy_loss(tape: &mut Tape, logits: Var, labels: &[usize], lambda: f64) -> Result<Var> {
    if !(lambda >= 0.0) {
        return Err(precondition(format!("entropy weight must be nonnegative, got {lambda}")));
    }
    let (rows, classes) = tape.value(logits).dims2()?;
    check_labels(labels, rows, classes)?;
    let log_probs = tape.log_softmax(logits, 1.0)?;
    let ce = soft_cross_entropy(tape, log_probs, one_hot(labels, classes)?)?;
    let probs = tape.exp(log_probs);
    let plogp = tape.mul(probs, log_probs)?;
    let s = tape.sum(plogp);
    // −λ·H = +λ·(1/B)·Σ p log p
    let penalty = tape.scale(s, lambda / rows as f64);
    tape.add(ce, penalty)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn mat(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn scalar(tape: &Tape, v: Var) -> f64 {
        tape.value(v).data()[0]
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        for tau in [0.1, 1.0, 7.0] {
            let s = softmax_temperature(&mat(&[&[5.0, 5.0, 5.0]]), tau).unwrap();
            for &p in s.data() {
                assert!((p - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn softmax_temperature_two_classes() {
        let s = softmax_temperature(&mat(&[&[2.0, 0.0]]), 2.0).unwrap();
        // e/(e+1), 1/(e+1)
        assert!((s.data()[0] - 0.731_058_578_630_004_9).abs() < 1e-15);
        assert!((s.data()[1] - 0.268_941_421_369_995_1).abs() < 1e-15);
    }

    #[test]
    fn huge_temperature_approaches_uniform() {
        let s = softmax_temperature(&mat(&[&[100.0, 0.0]]), 1e6).unwrap();
        let h = entropy_rows(&s).unwrap()[0];
        assert!((h - LN_2).abs() < 1e-4);
    }

    #[test]
    fn softmax_rejects_bad_temperature() {
        assert!(softmax_temperature(&mat(&[&[1.0, 0.0]]), 0.0).is_err());
        assert!(softmax_temperature(&mat(&[&[1.0, 0.0]]), -2.0).is_err());
    }

    #[test]
    fn cross_entropy_uniform_logits() {
        let mut tape = Tape::new();
        let z = tape.leaf(mat(&[&[0.0, 0.0]]), true);
        let l = cross_entropy(&mut tape, z, &[0]).unwrap();
        assert!((scalar(&tape, l) - LN_2).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_saturates_without_overflow() {
        let mut tape = Tape::new();
        let z = tape.leaf(mat(&[&[1000.0, 0.0]]), true);
        let l = cross_entropy(&mut tape, z, &[0]).unwrap();
        let v = scalar(&tape, l);
        assert!(v.is_finite() && v.abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_three_classes() {
        let mut tape = Tape::new();
        let z = tape.leaf(mat(&[&[1.0, 2.0, 3.0]]), true);
        let l = cross_entropy(&mut tape, z, &[2]).unwrap();
        assert!((scalar(&tape, l) - 0.407_605_964_444_380_3).abs() < 1e-14);
    }

    #[test]
    fn cross_entropy_rejects_bad_class() {
        let mut tape = Tape::new();
        let z = tape.leaf(mat(&[&[1.0, 2.0]]), true);
        assert!(matches!(cross_entropy(&mut tape, z, &[2]), Err(Error::Contract(_))));
    }

    #[test]
    fn kl_of_point_mass_against_uniform() {
        let kl = kl_divergence(&mat(&[&[1.0, 0.0]]), &mat(&[&[0.5, 0.5]])).unwrap();
        assert!((kl - LN_2).abs() < 1e-15);
    }

    #[test]
    fn kl_floors_zero_in_second_argument() {
        let kl = kl_divergence(&mat(&[&[0.5, 0.5]]), &mat(&[&[1.0, 0.0]])).unwrap();
        assert!(kl.is_finite() && kl > 10.0);
    }

    #[test]
    fn lwr_with_zero_beta_is_cross_entropy() {
        let z_val = mat(&[&[0.3, -1.2, 2.0], &[1.0, 1.0, -0.5]]);
        let labels = [2, 0];

        let mut t1 = Tape::new();
        let z1 = t1.leaf(z_val.clone(), true);
        let ce = cross_entropy(&mut t1, z1, &labels).unwrap();
        t1.backward(ce).unwrap();

        let mut t2 = Tape::new();
        let z2 = t2.leaf(z_val, true);
        let stored = t2.constant(mat(&[&[0.2, 0.3, 0.5], &[0.1, 0.8, 0.1]]));
        let terms = lwr_loss(&mut t2, z2, &labels, stored, 4.0, 1.0, 0.0).unwrap();
        t2.backward(terms.total).unwrap();

        assert_eq!(scalar(&t1, ce), scalar(&t2, terms.total));
        assert_eq!(t1.grad(z1), t2.grad(z2));
    }

    #[test]
    fn lwr_with_self_target_reduces_to_weighted_ce() {
        let z_val = mat(&[&[0.3, -1.2, 2.0]]);
        let tau = 3.0;
        let mut tape = Tape::new();
        let z = tape.leaf(z_val.clone(), true);
        let stored = tape.constant(softmax_temperature(&z_val, tau).unwrap());
        let terms = lwr_loss(&mut tape, z, &[1], stored, tau, 0.7, 0.3).unwrap();
        assert!(scalar(&tape, terms.kl).abs() < 1e-15);
        assert!((scalar(&tape, terms.total) - 0.7 * scalar(&tape, terms.ce)).abs() < 1e-15);
    }

    #[test]
    fn lwr_two_class_value() {
        // 0.5·log(1+e^-1) + 0.5·4·KL([0.6,0.4] ∥ σ([0.5,0]))
        let mut tape = Tape::new();
        let z = tape.leaf(mat(&[&[1.0, 0.0]]), true);
        let stored = tape.constant(mat(&[&[0.6, 0.4]]));
        let terms = lwr_loss(&mut tape, z, &[0], stored, 2.0, 0.5, 0.5).unwrap();
        assert!((scalar(&tape, terms.ce) - 0.313_261_687_518_222_8).abs() < 1e-14);
        assert!((scalar(&tape, terms.kl) - 0.001_065_317_170_850_244_9).abs() < 1e-14);
        assert!((scalar(&tape, terms.total) - 0.158_761_478_100_811_9).abs() < 1e-14);
    }

    #[test]
    fn lwr_shape_mismatch() {
        let mut tape = Tape::new();
        let z = tape.leaf(mat(&[&[1.0, 0.0]]), true);
        let stored = tape.constant(mat(&[&[0.2, 0.3, 0.5]]));
        assert!(matches!(
            lwr_loss(&mut tape, z, &[0], stored, 2.0, 0.5, 0.5),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn lsr_with_zero_epsilon_is_cross_entropy() {
        let z_val = mat(&[&[0.3, -1.2, 2.0]]);
        let mut t1 = Tape::new();
        let z1 = t1.leaf(z_val.clone(), true);
        let a = cross_entropy(&mut t1, z1, &[0]).unwrap();
        let mut t2 = Tape::new();
        let z2 = t2.leaf(z_val, true);
        let b = lsr_loss(&mut t2, z2, &[0], 0.0).unwrap();
        assert_eq!(scalar(&t1, a), scalar(&t2, b));
    }

    #[test]
    fn lsr_rejects_epsilon_of_one() {
        let mut tape = Tape::new();
        let z = tape.leaf(mat(&[&[0.3, -1.2]]), true);
        assert!(lsr_loss(&mut tape, z, &[0], 1.0).is_err());
    }

    #[test]
    fn max_entropy_zero_lambda_is_cross_entropy() {
        let z_val = mat(&[&[0.3, -1.2, 2.0]]);
        let mut t1 = Tape::new();
        let z1 = t1.leaf(z_val.clone(), true);
        let a = cross_entropy(&mut t1, z1, &[1]).unwrap();
        let mut t2 = Tape::new();
        let z2 = t2.leaf(z_val, true);
        let b = max_entropy_loss(&mut t2, z2, &[1], 0.0).unwrap();
        assert_eq!(scalar(&t1, a), scalar(&t2, b));
    }

    #[test]
    fn max_entropy_uniform_logits_subtract_log_c() {
        let c = 5.0f64;
        let mut tape = Tape::new();
        let z = tape.leaf(mat(&[&[0.0; 5]]), true);
        let l = max_entropy_loss(&mut tape, z, &[3], 0.2).unwrap();
        // CE = ln C, entropy = ln C
        assert!((scalar(&tape, l) - (c.ln() - 0.2 * c.ln())).abs() < 1e-14);
    }

    #[test]
    fn max_entropy_two_class_value() {
        let mut tape = Tape::new();
        let z = tape.leaf(mat(&[&[1.0, 0.0]]), true);
        let l = max_entropy_loss(&mut tape, z, &[0], 0.1).unwrap();
        assert!((scalar(&tape, l) - 0.255_041_376_629_401).abs() < 1e-14);
    }

    #[test]
    fn probability_vector_validation() {
        assert!(ProbabilityVector::new(vec![0.5, 0.5]).is_ok());
        assert!(ProbabilityVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbabilityVector::new(vec![1.2, -0.2]).is_err());
        let u = ProbabilityVector::uniform(4);
        assert!((u.entropy() - 4f64.ln()).abs() < 1e-15);
    }
}
