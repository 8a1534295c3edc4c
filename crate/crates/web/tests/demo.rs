use retrolearn_web::{compare_impl, schedule_impl, soften_impl, CompareOptions};

#[test]
fn softening_sums_to_one_and_flattens() {
    let sharp = soften_impl(&[3.0, 1.0, 0.0], 1.0).unwrap();
    let soft = soften_impl(&[3.0, 1.0, 0.0], 10.0).unwrap();
    assert!((sharp.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!((soft.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(soft[0] < sharp[0]);
    assert!(soften_impl(&[1.0], 0.0).is_err());
}

#[test]
fn schedule_lists_commits_and_weights() {
    let s = schedule_impl(5, 20).unwrap();
    assert_eq!(s.commit_epochs(), vec![5, 10, 15, 20]);
    assert_eq!(s.alpha().len(), 20);
    assert_eq!((s.alpha()[0], s.beta()[0]), (1.0, 0.0));
    for (a, b) in s.alpha().iter().zip(s.beta()) {
        assert!((a + b - 1.0).abs() < 1e-12);
    }
    assert!(schedule_impl(0, 20).is_err());
}

#[test]
fn comparison_produces_full_traces() {
    let c = compare_impl(CompareOptions { noise_rate: 0.2, tau: 5.0, k: 2, epochs: 4, seed: 1 }).unwrap();
    for t in [c.std_trace(), c.lwr_trace()] {
        assert_eq!(t.test_acc.len(), 4);
        assert_eq!(t.bin_count.len(), 15);
        assert!((0.0..=1.0).contains(&t.last_acc));
        assert!(t.best_acc >= t.last_acc);
    }
    assert!(compare_impl(CompareOptions { noise_rate: 1.5, tau: 5.0, k: 2, epochs: 4, seed: 1 }).is_err());
}
