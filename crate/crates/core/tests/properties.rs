use proptest::prelude::*;
use retrolearn::autodiff::{Tape, Tensor};
use retrolearn::data::BatchPlan;
use retrolearn::losses::{
    cross_entropy, entropy_rows, kl_divergence, lsr_loss, lwr_loss, max_entropy_loss, softmax_temperature,
};

const TAUS: [f64; 6] = [0.5, 1.0, 2.0, 5.0, 10.0, 100.0];

fn logits_row(max_abs: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-max_abs..max_abs, 2..12)
}

fn distribution() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.001f64..1.0, 2..10).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn entropy_grows_with_temperature(row in logits_row(20.0)) {
        let t = Tensor::from_rows(&[row]).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for tau in TAUS {
            let h = entropy_rows(&softmax_temperature(&t, tau).unwrap()).unwrap()[0];
            prop_assert!(h >= prev - 1e-12, "entropy fell at tau={tau}: {h} < {prev}");
            prev = h;
        }
    }

    #[test]
    fn softened_rows_are_distributions(row in logits_row(1e4), tau in 0.1f64..100.0) {
        let s = softmax_temperature(&Tensor::from_rows(&[row]).unwrap(), tau).unwrap();
        let sum: f64 = s.data().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        prop_assert!(s.data().iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn kl_is_nonnegative_and_zero_on_self(pq in distribution().prop_flat_map(|p| {
        let n = p.len();
        (Just(p), prop::collection::vec(0.001f64..1.0, n))
    })) {
        let (p, q) = pq;
        let qs: f64 = q.iter().sum();
        let q: Vec<f64> = q.into_iter().map(|x| x / qs).collect();
        let pt = Tensor::from_rows(&[p]).unwrap();
        let qt = Tensor::from_rows(&[q]).unwrap();
        prop_assert!(kl_divergence(&pt, &qt).unwrap() >= -1e-12);
        prop_assert!(kl_divergence(&pt, &pt).unwrap().abs() < 1e-12);
    }

    #[test]
    fn losses_stay_finite_for_large_logits(
        row in logits_row(1e4),
        tau in 0.5f64..20.0,
        label_seed in 0usize..1000,
    ) {
        let c = row.len();
        let label = [label_seed % c];
        let t = Tensor::from_rows(&[row]).unwrap();
        let stored = softmax_temperature(&Tensor::from_rows(&[vec![1.0; c]]).unwrap(), 1.0).unwrap();
        for which in 0..4 {
            let mut tape = Tape::new();
            let z = tape.leaf(t.clone(), true);
            let loss = match which {
                0 => cross_entropy(&mut tape, z, &label).unwrap(),
                1 => lsr_loss(&mut tape, z, &label, 0.1).unwrap(),
                2 => max_entropy_loss(&mut tape, z, &label, 0.1).unwrap(),
                _ => {
                    let s = tape.constant(stored.clone());
                    lwr_loss(&mut tape, z, &label, s, tau, 0.5, 0.5).unwrap().total
                }
            };
            tape.backward(loss).unwrap();
            prop_assert!(tape.value(loss).is_finite(), "loss {which}");
            prop_assert!(tape.grad(z).unwrap().is_finite(), "grad {which}");
        }
    }

    #[test]
    fn batches_cover_every_sample_once(n in 1usize..300, b in 1usize..64, seed in any::<u64>()) {
        let mut plan = BatchPlan::new(seed, b).unwrap();
        for _ in 0..2 {
            let batches = plan.next_epoch_ids(n);
            let mut seen = vec![0u8; n];
            for batch in &batches {
                prop_assert!(!batch.is_empty() && batch.len() <= b);
                for &i in batch {
                    seen[i] += 1;
                }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
        }
    }

    #[test]
    fn stored_labels_receive_no_gradient(
        row in prop::collection::vec(-5.0f64..5.0, 3),
        s in distribution().prop_filter("three classes", |v| v.len() == 3),
        tau in 0.5f64..10.0,
        beta in 0.0f64..1.0,
    ) {
        let mut tape = Tape::new();
        let z = tape.leaf(Tensor::from_rows(&[row]).unwrap(), true);
        let stored = tape.leaf(Tensor::from_rows(&[s]).unwrap(), true);
        let terms = lwr_loss(&mut tape, z, &[1], stored, tau, 1.0 - beta, beta).unwrap();
        tape.backward(terms.total).unwrap();
        prop_assert!(tape.grad(stored).unwrap().data().iter().all(|&g| g == 0.0));
    }
}
