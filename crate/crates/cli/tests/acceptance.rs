//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero if any fail.
//!
//! Datasets are read from `RETROLEARN_DATA_DIR` (default: the workspace
//! `data/` directory).

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use retrolearn::autodiff::{finite_difference_check, Tape, Tensor};
use retrolearn::losses::{cross_entropy, lsr_loss, lwr_loss, max_entropy_loss, softmax_temperature};
use retrolearn::metrics::compute_ece;
use retrolearn::model::{forward_on_tape, Activation, Mlp, MlpSpec};
use retrolearn::retrospection::{RetroSchedule, SoftLabelStore};
use retrolearn_cli::commands::{EPOCH_LOG_FILE, RELIABILITY_FILE, SOFT_LABELS_FILE};
use retrolearn_cli::results::{AggregateRow, RESULTS_FILE};
use retrolearn_cli::{cmd_robustness, cmd_run, cmd_sweep, CommonArgs};

type Verdict = Result<String, String>;

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn data_dir() -> PathBuf {
    std::env::var_os("RETROLEARN_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| workspace().join("data"))
}

fn config(name: &str) -> PathBuf {
    workspace().join("configs").join(name)
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

/// STD seed mean and the best LWR cell of a sweep, by last-epoch accuracy.
fn sweep_means(aggs: &[AggregateRow]) -> Result<(f64, &AggregateRow), String> {
    let std = aggs
        .iter()
        .find(|a| a.method == "STD")
        .ok_or("sweep produced no STD baseline")?;
    let best = aggs
        .iter()
        .filter(|a| a.method == "LWR" && a.n > 0)
        .max_by(|a, b| a.last_mean.total_cmp(&b.last_mean))
        .ok_or("sweep produced no LWR cell")?;
    Ok((std.last_mean, best))
}

fn tabular_sweep(cfg: &str, files: &[&str], overrides: &[(&str, &str)]) -> Result<(Vec<AggregateRow>, f64), String> {
    let dir = data_dir();
    let missing: Vec<String> = files
        .iter()
        .map(|f| dir.join(f))
        .filter(|p| !p.exists())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(format!("dataset not available: {} (set RETROLEARN_DATA_DIR)", missing.join(", ")));
    }
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut args = CommonArgs::new(Some(config(cfg)), out.path());
    for (k, f) in overrides {
        args.overrides
            .push(format!("{k}=\"{}\"", dir.join(f).display().to_string().replace('\\', "/")));
    }
    let t = Instant::now();
    let table = cmd_sweep(&args).map_err(|e| e.to_string())?;
    Ok((table.aggregates, t.elapsed().as_secs_f64()))
}

fn ac1_iris() -> Verdict {
    let (aggs, secs) = tabular_sweep("iris.toml", &["iris.csv"], &[("dataset.train", "iris.csv")])?;
    let (std, best) = sweep_means(&aggs)?;
    let lwr = best.last_mean;
    let detail = format!(
        "STD {} (want 85..95), LWR best cell tau={} k={} {} (want >= STD+2 and 95.56±4), {secs:.1}s (want < 60)",
        pct(std),
        best.tau.unwrap_or(f64::NAN),
        best.k.unwrap_or(0),
        pct(lwr)
    );
    check(
        (0.85..=0.95).contains(&std) && lwr >= std + 0.02 && (lwr - 0.9556).abs() <= 0.04 && secs < 60.0,
        detail,
    )
}

fn ac2_abalone() -> Verdict {
    let (aggs, secs) = tabular_sweep("abalone.toml", &["abalone.csv"], &[("dataset.train", "abalone.csv")])?;
    let (std, best) = sweep_means(&aggs)?;
    let gap = best.last_mean - std;
    check(
        gap >= 0.03 && secs < 600.0,
        format!(
            "STD {}, LWR {} gap {} (want >= 3.00), {secs:.1}s (want < 600)",
            pct(std),
            pct(best.last_mean),
            pct(gap)
        ),
    )
}

fn ac3_arcene() -> Verdict {
    let (aggs, secs) = tabular_sweep(
        "arcene.toml",
        &["arcene_train.csv", "arcene_test.csv"],
        &[("dataset.train", "arcene_train.csv"), ("dataset.test", "arcene_test.csv")],
    )?;
    let (std, best) = sweep_means(&aggs)?;
    check(
        best.last_mean >= std && secs < 600.0,
        format!("STD {}, LWR {} (want LWR >= STD), {secs:.1}s (want < 600)", pct(std), pct(best.last_mean)),
    )
}

fn ac4_robustness() -> Verdict {
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut args = CommonArgs::new(Some(config("blobs_robustness.toml")), out.path());
    args.overrides = vec![
        "robustness.methods=[\"STD\", \"LWR\"]".into(),
        "robustness.rates=[0.6]".into(),
        "robustness.seeds=[0, 1, 2]".into(),
    ];
    let t = Instant::now();
    let table = cmd_robustness(&args).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    let get = |m: &str| table.aggregates.iter().find(|a| a.method == m).cloned();
    let (std, lwr) = (get("STD").ok_or("no STD row")?, get("LWR").ok_or("no LWR row")?);
    if std.n != 3 || lwr.n != 3 {
        return Err(format!("expected 3 successful seeds each, got STD {} LWR {}", std.n, lwr.n));
    }
    let gap_std = std.best_mean - std.last_mean;
    let gap_lwr = lwr.best_mean - lwr.last_mean;
    check(
        gap_std >= 3.0 * gap_lwr && lwr.last_mean > std.last_mean && secs < 300.0,
        format!(
            "60% noise: STD last {} best {} gap {}; LWR last {} best {} gap {}; ratio {:.2} (want >= 3), {secs:.1}s (want < 300)",
            pct(std.last_mean),
            pct(std.best_mean),
            pct(gap_std),
            pct(lwr.last_mean),
            pct(lwr.best_mean),
            pct(gap_lwr),
            gap_std / gap_lwr.max(1e-12)
        ),
    )
}

fn random_logits(rng: &mut ChaCha8Rng, rows: usize, classes: usize, scale: f64) -> Tensor {
    Tensor::new(
        vec![rows, classes],
        (0..rows * classes).map(|_| rng.random_range(-scale..scale)).collect(),
    )
    .unwrap()
}

fn ac5_lsr_identity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let rows = rng.random_range(1..=16);
        let classes = rng.random_range(2..=10);
        let logits = random_logits(&mut rng, rows, classes, 10.0);
        let labels: Vec<usize> = (0..rows).map(|_| rng.random_range(0..classes)).collect();

        let mut tape = Tape::new();
        let z = tape.leaf(logits.clone(), true);
        let l = lsr_loss(&mut tape, z, &labels, 0.1).map_err(|e| e.to_string())?;
        tape.backward(l).map_err(|e| e.to_string())?;
        let g_lsr = tape.grad(z).unwrap().clone();

        let mut tape = Tape::new();
        let z = tape.leaf(logits, true);
        let u = tape.constant(Tensor::new(vec![rows, classes], vec![1.0 / classes as f64; rows * classes]).unwrap());
        let l = lwr_loss(&mut tape, z, &labels, u, 1.0, 0.9, 0.1).map_err(|e| e.to_string())?;
        tape.backward(l.total).map_err(|e| e.to_string())?;
        for (a, b) in g_lsr.data().iter().zip(tape.grad(z).unwrap().data()) {
            worst = worst.max((a - b).abs());
        }
    }
    check(worst <= 1e-9, format!("max |grad difference| over 100 batches = {worst:.3e} (want <= 1e-9)"))
}

fn ac6_gradcheck() -> Verdict {
    let names = ["CE", "LSR", "MaxEntropy", "LWR"];
    let mut worst = [0.0f64; 4];
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(6000 + trial);
        let input_dim = rng.random_range(1..=5);
        let classes = rng.random_range(2..=5);
        let batch = rng.random_range(1..=6);
        let mut model = Mlp::new(
            MlpSpec {
                input_dim,
                hidden: vec![rng.random_range(1..=8), rng.random_range(1..=8)],
                num_classes: classes,
                activation: Activation::Relu,
                zero_output_layer: false,
            },
            &mut rng,
        )
        .map_err(|e| e.to_string())?;
        // Nonzero biases keep probes off the ReLU kink.
        for p in model.params_mut().iter_mut().filter(|p| p.name.ends_with("bias")) {
            p.value.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
        }
        let x = random_logits(&mut rng, batch, input_dim, 2.0);
        let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..classes)).collect();
        let tau = rng.random_range(0.5..10.0);
        let stored = softmax_temperature(&random_logits(&mut rng, batch, classes, 3.0), tau).unwrap();
        let beta = rng.random_range(0.0..0.9);
        for (which, w) in worst.iter_mut().enumerate() {
            let err = finite_difference_check(model.params(), 1e-5, |tape, bound| {
                let xv = tape.constant(x.clone());
                let z = forward_on_tape(tape, bound, xv)?;
                match which {
                    0 => cross_entropy(tape, z, &labels),
                    1 => lsr_loss(tape, z, &labels, 0.1),
                    2 => max_entropy_loss(tape, z, &labels, 0.1),
                    _ => {
                        let s = tape.constant(stored.clone());
                        Ok(lwr_loss(tape, z, &labels, s, tau, 1.0 - beta, beta)?.total)
                    }
                }
            })
            .map_err(|e| e.to_string())?;
            *w = w.max(err);
        }
    }
    let detail = names
        .iter()
        .zip(worst)
        .map(|(n, w)| format!("{n} {w:.2e}"))
        .collect::<Vec<_>>()
        .join(", ");
    check(
        worst.iter().all(|&w| w < 1e-4),
        format!("worst relative error over 100 trials: {detail} (want < 1e-4)"),
    )
}

fn brute_force_ece(conf: &[f64], correct: &[bool], bins: usize) -> f64 {
    let n = conf.len() as f64;
    (0..bins)
        .map(|m| {
            let (lo, hi) = (m as f64 / bins as f64, (m + 1) as f64 / bins as f64);
            let idx: Vec<usize> = (0..conf.len())
                .filter(|&i| (conf[i] > lo && conf[i] <= hi) || (m == 0 && conf[i] == 0.0))
                .collect();
            if idx.is_empty() {
                return 0.0;
            }
            let k = idx.len() as f64;
            let acc = idx.iter().filter(|&&i| correct[i]).count() as f64 / k;
            let avg = idx.iter().map(|&i| conf[i]).sum::<f64>() / k;
            k / n * (acc - avg).abs()
        })
        .sum()
}

fn ac7_ece() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=300);
        let bins = rng.random_range(1..=30);
        let conf: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random_bool(0.1) {
                    rng.random_range(0..=bins) as f64 / bins as f64
                } else {
                    rng.random_range(0.0..=1.0)
                }
            })
            .collect();
        let correct: Vec<bool> = (0..n).map(|_| rng.random_bool(0.7)).collect();
        let got = compute_ece(&conf, &correct, bins).map_err(|e| e.to_string())?.ece;
        worst = worst.max((got - brute_force_ece(&conf, &correct, bins)).abs());
    }
    let hand = compute_ece(&[0.6, 0.7, 0.9, 0.95], &[true, false, true, true], 2)
        .map_err(|e| e.to_string())?
        .ece;
    check(
        worst <= 1e-12 && (hand - 0.0375).abs() <= 1e-12,
        format!("max deviation from brute force over 1000 instances {worst:.1e} (want <= 1e-12); 4-sample case {hand}"),
    )
}

fn ac8_stop_gradient() -> Verdict {
    let logits = Tensor::from_rows(&[vec![1.0, -0.5, 2.0], vec![0.3, 0.1, -1.2]]).unwrap();
    let eval = |s: &Tensor| -> (f64, Vec<f64>) {
        let mut tape = Tape::new();
        let z = tape.leaf(logits.clone(), true);
        let sv = tape.leaf(s.clone(), true);
        let t = lwr_loss(&mut tape, z, &[2, 0], sv, 3.0, 0.6, 0.4).unwrap();
        tape.backward(t.total).unwrap();
        (tape.value(t.total).data()[0], tape.grad(sv).unwrap().data().to_vec())
    };
    let a = Tensor::from_rows(&[vec![0.2, 0.3, 0.5], vec![0.6, 0.3, 0.1]]).unwrap();
    let b = Tensor::from_rows(&[vec![0.1, 0.1, 0.8], vec![0.3, 0.3, 0.4]]).unwrap();
    let ((va, ga), (vb, gb)) = (eval(&a), eval(&b));
    let value_changes = va != vb;
    let zero_grad = ga.iter().chain(&gb).all(|&g| g == 0.0);

    // Active buffer across a simulated k=4 run with changing logits.
    let (n, c, k) = (10, 4, 4);
    let mut store = SoftLabelStore::new(n, c).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut constant = true;
    for epoch in 1..=12 {
        let before = store.active_buffer().map(<[f64]>::to_vec);
        for chunk in (0..n).collect::<Vec<_>>().chunks(3) {
            let z = random_logits(&mut rng, chunk.len(), c, 4.0);
            store.record_pending(chunk, &z, 2.0).unwrap();
            let now = store.active_buffer().map(<[f64]>::to_vec);
            let same = match (&before, &now) {
                (Some(x), Some(y)) => x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits()),
                (None, None) => true,
                _ => false,
            };
            constant &= same;
        }
        store.commit_if_due(epoch, k).unwrap();
    }
    check(
        value_changes && zero_grad && constant && store.snapshot_index() == 3,
        format!(
            "loss {va:.6} vs {vb:.6} under perturbed labels; stored-label gradient all zero: {zero_grad}; active buffer bitwise-constant between commits: {constant}"
        ),
    )
}

fn strip_wall_time(csv_text: &str) -> String {
    let mut lines = csv_text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let col = header.iter().position(|h| *h == "wall_time_s");
    std::iter::once(header.join(","))
        .chain(lines.map(|l| {
            l.split(',')
                .enumerate()
                .filter(|(i, _)| Some(*i) != col)
                .map(|(_, f)| f)
                .collect::<Vec<_>>()
                .join(",")
        }))
        .collect::<Vec<_>>()
        .join("\n")
}

fn ac9_determinism() -> Verdict {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |sub: &str| -> Result<PathBuf, String> {
        let mut args = CommonArgs::new(Some(config("iris.toml")), root.path().join(sub));
        args.seed = Some(1);
        args.overrides.push(format!(
            "dataset.train=\"{}\"",
            data_dir().join("iris.csv").display().to_string().replace('\\', "/")
        ));
        cmd_run(&args).map(|o| o.out_dir).map_err(|e| e.to_string())
    };
    let (a, b) = (run("a")?, run("b")?);
    let read = |d: &Path, f: &str| std::fs::read_to_string(d.join(f)).map_err(|e| format!("{f}: {e}"));
    let mut same = Vec::new();
    for f in [EPOCH_LOG_FILE, RELIABILITY_FILE, SOFT_LABELS_FILE] {
        same.push((f, read(&a, f)? == read(&b, f)?));
    }
    same.push((
        RESULTS_FILE,
        strip_wall_time(&read(&a, RESULTS_FILE)?) == strip_wall_time(&read(&b, RESULTS_FILE)?),
    ));
    let detail = same
        .iter()
        .map(|(f, s)| format!("{f} {}", if *s { "identical" } else { "DIFFERS" }))
        .collect::<Vec<_>>()
        .join(", ");
    check(same.iter().all(|(_, s)| *s), detail)
}

fn ac10_schedule() -> Verdict {
    let (m, k, n, c) = (200, 5, 6, 3);
    let schedule = RetroSchedule::new(k, m).map_err(|e| e.to_string())?;
    let mut store = SoftLabelStore::new(n, c).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut commits = 0;
    let mut prev_alpha = f64::INFINITY;
    let mut monotone = true;
    let mut sums_to_one = true;
    let mut starts_at_one = true;
    for epoch in 1..=m {
        let (alpha, beta) = schedule.alpha_beta(epoch).map_err(|e| e.to_string())?;
        if epoch == 1 {
            starts_at_one = (alpha, beta) == (1.0, 0.0);
        }
        monotone &= alpha <= prev_alpha;
        if commits >= 1 {
            sums_to_one &= alpha + beta == 1.0;
        }
        prev_alpha = alpha;
        let ids: Vec<usize> = (0..n).collect();
        store.record_pending(&ids, &random_logits(&mut rng, n, c, 2.0), 2.0).unwrap();
        if store.commit_if_due(epoch, k).map_err(|e| e.to_string())? {
            commits += 1;
        }
    }
    let (alpha_final, beta_final) = schedule.weights_for_snapshot(commits);
    check(
        commits == 40
            && store.snapshot_index() == 40
            && starts_at_one
            && monotone
            && sums_to_one
            && (beta_final - 0.9).abs() < 1e-12,
        format!(
            "{commits} commits (want 40); alpha from 1.0 nonincreasing: {monotone}; alpha+beta=1 after first commit: {sums_to_one}; final commit (alpha, beta) = ({alpha_final:.4}, {beta_final:.4})"
        ),
    )
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 10] = [
        ("1 Iris reproduction", ac1_iris),
        ("2 Abalone reproduction", ac2_abalone),
        ("3 Arcene reproduction", ac3_arcene),
        ("4 Robustness under 60% label noise", ac4_robustness),
        ("5 LSR identity", ac5_lsr_identity),
        ("6 Gradient check", ac6_gradcheck),
        ("7 ECE oracle", ac7_ece),
        ("8 Stop-gradient", ac8_stop_gradient),
        ("9 Determinism", ac9_determinism),
        ("10 Schedule", ac10_schedule),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.to_lowercase().contains(&p.to_lowercase())) {
            continue;
        }
        let t = Instant::now();
        let verdict = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match verdict {
            Ok(d) => println!("criterion {name}: PASS ({d}) [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("criterion {name}: FAIL ({d}) [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
