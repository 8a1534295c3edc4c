//! Label smoothing is retrospection against a uniform stored label at τ = 1:
//! the two gradients agree and the values differ by the constant log C
//! weighted by β.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use retrolearn::autodiff::{Tape, Tensor};
use retrolearn::losses::{lsr_loss, lwr_loss};

fn gradients(logits: &Tensor, labels: &[usize]) -> (Vec<f64>, Vec<f64>, f64, f64) {
    let (rows, classes) = logits.dims2().unwrap();

    let mut tape = Tape::new();
    let z = tape.leaf(logits.clone(), true);
    let lsr = lsr_loss(&mut tape, z, labels, 0.1).unwrap();
    tape.backward(lsr).unwrap();
    let g_lsr = tape.grad(z).unwrap().data().to_vec();
    let v_lsr = tape.value(lsr).data()[0];

    let mut tape = Tape::new();
    let z = tape.leaf(logits.clone(), true);
    let uniform = tape.constant(Tensor::new(vec![rows, classes], vec![1.0 / classes as f64; rows * classes]).unwrap());
    let lwr = lwr_loss(&mut tape, z, labels, uniform, 1.0, 0.9, 0.1).unwrap();
    tape.backward(lwr.total).unwrap();
    let g_lwr = tape.grad(z).unwrap().data().to_vec();
    let v_lwr = tape.value(lwr.total).data()[0];
    (g_lsr, g_lwr, v_lsr, v_lwr)
}

#[test]
fn gradients_match_on_random_batches() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let rows = rng.random_range(1..=16);
        let classes = rng.random_range(2..=10);
        let logits = Tensor::new(
            vec![rows, classes],
            (0..rows * classes).map(|_| rng.random_range(-10.0..10.0)).collect(),
        )
        .unwrap();
        let labels: Vec<usize> = (0..rows).map(|_| rng.random_range(0..classes)).collect();
        let (a, b, v_lsr, v_lwr) = gradients(&logits, &labels);
        for (x, y) in a.iter().zip(&b) {
            worst = worst.max((x - y).abs());
        }
        // KL(u ∥ p) = CE(u, p) − log C, so the values differ by β·log C.
        let offset = 0.1 * (classes as f64).ln();
        assert!((v_lsr - (v_lwr + offset)).abs() < 1e-9);
    }
    assert!(worst < 1e-9, "max gradient difference {worst:e}");
}
