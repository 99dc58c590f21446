//! Acceptance suite. Each test covers one numbered criterion at its stated
//! tolerance and prints one pass line; a failed assertion is the fail line.
//!
//! Run with `cargo test -p sevkit --test acceptance -- --nocapture`.

use std::path::Path;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sevkit::corpus::{build_split_plan, load_manifest, sample_matched, StratifyKey};
use sevkit::corpus::{CorpusTag, ScoreScale, SplitTag, UtteranceRecord};
use sevkit::encoder::{mean_pool, FrameFeatures, ToyEncoderSource};
use sevkit::fixture::{generate_fixture, FixtureConfig};
use sevkit::metrics::{fractional_ranks, pearson, spearman, MetricTriple};
use sevkit::model::{init_head, loss_and_grad, HeadConfig, HeadParams, Mode};
use sevkit::report::{render_grid, GridFormat, Method, RunReport};
use sevkit::scale::mos_to_severity;
use sevkit::train::{
    embed_records, evaluate, train_ft, train_idt, train_jt, ParadigmSpec, TargetSize, TrainConfig,
    TrainInputs, TrainOutcome,
};

fn pass(n: usize, name: &str) {
    println!("[acceptance] criterion {n} ({name}): PASS");
}

// ---------------------------------------------------------------------------
// Criterion 1: metric implementations against brute-force oracles.
// ---------------------------------------------------------------------------

/// Direct evaluation of the Pearson definition, no shared code with the
/// implementation under test.
fn brute_pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    if vx == 0.0 || vy == 0.0 {
        None
    } else {
        Some(cov / (vx.sqrt() * vy.sqrt()))
    }
}

/// Fractional ranks by counting, O(n^2), independent of the sort-based path.
fn brute_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&xi| {
            let below = x.iter().filter(|&&xj| xj < xi).count() as f64;
            let tied = x.iter().filter(|&&xj| xj == xi).count() as f64;
            below + (tied + 1.0) / 2.0
        })
        .collect()
}

fn brute_spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    brute_pearson(&brute_ranks(x), &brute_ranks(y))
}

#[test]
fn criterion_1_metric_oracle_suite() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);

    for case in 0..200 {
        let n = rng.random_range(2..=100);
        let with_ties = case % 10 < 3; // 30% of pairs
        let draw = |rng: &mut ChaCha8Rng| -> f64 {
            if with_ties {
                rng.random_range(0..8) as f64
            } else {
                rng.random_range(-50.0..50.0)
            }
        };
        let x: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        let y: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();

        let (got_p, want_p) = (pearson(&x, &y).unwrap(), brute_pearson(&x, &y));
        match (got_p, want_p) {
            (Some(a), Some(b)) => assert!(
                (a - b).abs() <= 1e-10,
                "pearson {a} vs brute {b} (case {case})"
            ),
            (None, None) => {}
            other => panic!("pearson definedness mismatch {other:?} (case {case})"),
        }

        let (got_s, want_s) = (spearman(&x, &y).unwrap(), brute_spearman(&x, &y));
        match (got_s, want_s) {
            (Some(a), Some(b)) => assert!(
                (a - b).abs() <= 1e-10,
                "spearman {a} vs brute {b} (case {case})"
            ),
            (None, None) => {}
            other => panic!("spearman definedness mismatch {other:?} (case {case})"),
        }
    }

    // Tie-free pairs against the classic 1 - 6*sum(d^2)/(n(n^2-1)) identity.
    use rand::seq::SliceRandom;
    for _ in 0..200 {
        let n = rng.random_range(2..=100);
        let mut x: Vec<f64> = (0..n).map(|i| i as f64 + 0.25).collect();
        let mut y: Vec<f64> = (0..n).map(|i| i as f64 * 2.5).collect();
        x.shuffle(&mut rng);
        y.shuffle(&mut rng);
        let rx = fractional_ranks(&x);
        let ry = fractional_ranks(&y);
        let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b) * (a - b)).sum();
        let nf = n as f64;
        let shortcut = 1.0 - 6.0 * d2 / (nf * (nf * nf - 1.0));
        let got = spearman(&x, &y).unwrap().unwrap();
        assert!((got - shortcut).abs() <= 1e-12, "{got} vs {shortcut}");
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}, budget 5 s");
    pass(1, "metric oracle suite");
}

// ---------------------------------------------------------------------------
// Criterion 2: scale-map exactness.
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_scale_map_exactness() {
    let map = mos_to_severity();
    assert_eq!(map.apply(5.0).unwrap(), 1.0);
    assert_eq!(map.apply(3.0).unwrap(), 4.0);
    assert_eq!(map.apply(1.0).unwrap(), 7.0);

    let inverse = map.invert();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for _ in 0..1000 {
        let score = rng.random_range(1.0..=5.0);
        let back = inverse.apply(map.apply(score).unwrap()).unwrap();
        assert!(
            (back - score).abs() <= 1e-12,
            "round trip of {score} gave {back}"
        );
    }
    pass(2, "scale-map exactness");
}

// ---------------------------------------------------------------------------
// Criterion 3: analytic gradients against central finite differences.
// ---------------------------------------------------------------------------

fn fd_loss_gradient(
    params: &HeadParams,
    config: &HeadConfig,
    batch: &[(&Array1<f64>, f64)],
    mode: Mode,
    dropout_seed: u64,
    h: f64,
) -> Vec<f64> {
    (0..params.param_count())
        .map(|i| {
            let mut plus = params.clone();
            *plus.iter_mut().nth(i).unwrap() += h;
            let mut minus = params.clone();
            *minus.iter_mut().nth(i).unwrap() -= h;
            let lp = loss_and_grad(&plus, config, batch, mode, dropout_seed).unwrap().0;
            let lm = loss_and_grad(&minus, config, batch, mode, dropout_seed).unwrap().0;
            (lp - lm) / (2.0 * h)
        })
        .collect()
}

#[test]
fn criterion_3_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut checked = 0usize;
    let mut worst: f64 = 0.0;

    while checked < 100 {
        let dropout = rng.random_range(0.1..0.5);
        let config = HeadConfig::new(8).with_hidden_dim(16).with_dropout(dropout);
        let params = init_head(&config, rng.random()).unwrap();
        let batch_len = rng.random_range(1..=4);
        let xs: Vec<Array1<f64>> = (0..batch_len)
            .map(|_| Array1::from_iter((0..8).map(|_| rng.random_range(-1.5..1.5))))
            .collect();
        let batch: Vec<(&Array1<f64>, f64)> = xs
            .iter()
            .map(|x| (x, rng.random_range(-3.0..3.0)))
            .collect();

        // The ReLU derivative does not exist at the kink; finite differences
        // with h=1e-5 are meaningless there, so such draws are rejected.
        let near_kink = xs.iter().any(|x| {
            let a = params.w1.dot(x) + &params.b1;
            a.iter().any(|v| v.abs() < 1e-3)
        });
        if near_kink {
            continue;
        }
        checked += 1;

        for (mode, seed) in [(Mode::Eval, 0u64), (Mode::Train, rng.random())] {
            let (_, grads) = loss_and_grad(&params, &config, &batch, mode, seed).unwrap();
            let analytic: Vec<f64> = grads.iter().copied().collect();
            let numeric = fd_loss_gradient(&params, &config, &batch, mode, seed, 1e-5);
            for (a, n) in analytic.iter().zip(&numeric) {
                let denom = a.abs().max(n.abs());
                if denom < 1e-7 {
                    continue; // absolute floor
                }
                let rel = (a - n).abs() / denom;
                worst = worst.max(rel);
                assert!(
                    rel < 1e-4,
                    "relative error {rel} in {mode:?} (analytic {a}, numeric {n})"
                );
            }
        }
    }
    println!("[acceptance]   gradient check worst relative error: {worst:.3e}");
    pass(3, "gradient check");
}

// ---------------------------------------------------------------------------
// Criterion 4: pooling properties on random masked frame matrices.
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_pooling_properties() {
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(404);

    for _ in 0..1000 {
        let t = rng.random_range(1..24);
        let d = rng.random_range(1..12);
        let values =
            Array2::from_shape_fn((t, d), |_| rng.random_range(-100.0..100.0));
        let mut mask: Vec<bool> = (0..t).map(|_| rng.random_bool(0.7)).collect();
        if !mask.iter().any(|&m| m) {
            mask[rng.random_range(0..t)] = true;
        }
        let frames = FrameFeatures::new(values, mask, "toy".into()).unwrap();
        let base = mean_pool(&frames).unwrap();

        // Permutation invariance.
        let mut order: Vec<usize> = (0..t).collect();
        order.shuffle(&mut rng);
        let permuted = FrameFeatures::new(
            Array2::from_shape_fn((t, d), |(i, j)| frames.values[[order[i], j]]),
            order.iter().map(|&i| frames.valid_mask[i]).collect(),
            "toy".into(),
        )
        .unwrap();
        let pooled = mean_pool(&permuted).unwrap();
        for (a, b) in base.values.iter().zip(pooled.values.iter()) {
            assert!((a - b).abs() <= 1e-12, "permutation moved {a} to {b}");
        }

        // Padding neutrality: masked-out junk frames change nothing.
        let pad = rng.random_range(1..5);
        let mut padded_values = Array2::zeros((t + pad, d));
        padded_values
            .slice_mut(ndarray::s![..t, ..])
            .assign(&frames.values);
        for i in t..t + pad {
            for j in 0..d {
                padded_values[[i, j]] = rng.random_range(-1e9..1e9);
            }
        }
        let mut padded_mask = frames.valid_mask.clone();
        padded_mask.resize(t + pad, false);
        let padded = FrameFeatures::new(padded_values, padded_mask, "toy".into()).unwrap();
        assert_eq!(mean_pool(&padded).unwrap().values, base.values);

        // Convex-hull containment per coordinate.
        for j in 0..d {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for i in 0..t {
                if frames.valid_mask[i] {
                    lo = lo.min(frames.values[[i, j]]);
                    hi = hi.max(frames.values[[i, j]]);
                }
            }
            assert!(base.values[j] >= lo - 1e-12 && base.values[j] <= hi + 1e-12);
        }
    }
    pass(4, "pooling properties");
}

// ---------------------------------------------------------------------------
// Criterion 5: stratified sampler properties and the JT 1:1 pool.
// ---------------------------------------------------------------------------

fn synthetic_population(rng: &mut ChaCha8Rng, n: usize) -> Vec<UtteranceRecord> {
    (0..n)
        .map(|i| {
            let level = rng.random_range(1..=7);
            UtteranceRecord {
                id: format!("p{i:05}"),
                audio_path: format!("wav/p{i:05}.wav").into(),
                corpus: CorpusTag::Sap,
                dimension: "naturalness".into(),
                score: level as f64,
                scale: ScoreScale::SEVERITY,
                split: SplitTag::Train,
                duration_s: None,
            }
        })
        .collect()
}

#[test]
fn criterion_5_sampler_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);

    for pop_idx in 0..50 {
        let n = rng.random_range(40..400);
        let population = synthetic_population(&mut rng, n);

        // Sizes: 10%, 50%, and the full source (the `match` case).
        let targets = [n / 10, n / 2, n];
        for &target in &targets {
            let sample =
                sample_matched(&population, target, StratifyKey::RoundedScore, pop_idx as u64)
                    .unwrap();
            assert_eq!(sample.len(), target, "total count must be exact");

            for level in 1..=7i64 {
                let in_pop = population
                    .iter()
                    .filter(|r| r.score as i64 == level)
                    .count() as f64;
                let in_sample = sample
                    .iter()
                    .filter(|r| r.score as i64 == level)
                    .count() as f64;
                let expected = target as f64 * in_pop / n as f64;
                assert!(
                    (in_sample - expected).abs() < 1.0,
                    "bin {level}: got {in_sample}, proportional share {expected}"
                );
            }
        }
    }

    // JT pool is exactly 1:1 under the `match` preset.
    let dir = tempfile::tempdir().unwrap();
    let cfg = FixtureConfig {
        sap_train: 60,
        sap_test: 10,
        quali_train: 90,
        quali_validation: 10,
        quali_test: 0,
        noise_sigma: 0.1,
        seed: 51,
        ..FixtureConfig::default()
    };
    let fixture = generate_fixture(dir.path(), &cfg).unwrap();
    let sap = load_manifest(&fixture.sap_manifest).unwrap();
    let quali = load_manifest(&fixture.quali_manifest).unwrap();
    let sap_plan = build_split_plan(&sap, "naturalness", 10, 1).unwrap();
    let quali_plan = build_split_plan(&quali, "overall_quality", 0, 1).unwrap();

    let frames = ToyEncoderSource::new();
    let inputs = TrainInputs {
        sap_manifest: &sap,
        quali_manifest: Some(&quali),
        frames: &frames,
        head: HeadConfig::new(32).with_hidden_dim(8).with_dropout(0.0),
        run_dir: None,
    };
    let spec = ParadigmSpec::jt(
        "naturalness",
        "overall_quality",
        TargetSize::Match,
        mos_to_severity(),
    );
    let train_cfg = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 16,
        max_epochs: 2,
        patience: 2,
        seed: 5,
        ..TrainConfig::default()
    };
    let outcome = train_jt(&inputs, &sap_plan, &quali_plan, &spec, &train_cfg).unwrap();
    assert_eq!(outcome.summary.jt_pool_sap, Some(50));
    assert_eq!(outcome.summary.jt_pool_quali, Some(50));
    pass(5, "sampler properties");
}

// ---------------------------------------------------------------------------
// Criteria 6 and 8: synthetic IDT convergence, rerun-identical summaries.
// ---------------------------------------------------------------------------

/// Gaussian elimination with partial pivoting; the closed-form
/// least-squares oracle runs on an augmented [embedding, 1] design matrix.
#[allow(clippy::needless_range_loop)]
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        let diag = a[col][col];
        assert!(diag.abs() > 1e-12, "singular normal equations");
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = a[row][col] / diag;
            for k in col..n {
                let v = a[col][k];
                a[row][k] -= factor * v;
            }
            b[row] -= factor * b[col];
        }
    }
    (0..n).map(|i| b[i] / a[i][i]).collect()
}

fn least_squares_test_mse(
    train: &[(Array1<f64>, f64)],
    test: &[(Array1<f64>, f64)],
) -> f64 {
    let d = train[0].0.len() + 1;
    let mut ata = vec![vec![0.0; d]; d];
    let mut atb = vec![0.0; d];
    let aug = |x: &Array1<f64>| -> Vec<f64> {
        x.iter().copied().chain(std::iter::once(1.0)).collect()
    };
    for (x, y) in train {
        let row = aug(x);
        for i in 0..d {
            for j in 0..d {
                ata[i][j] += row[i] * row[j];
            }
            atb[i] += row[i] * y;
        }
    }
    let w = solve_linear(ata, atb);
    let mut mse = 0.0;
    for (x, y) in test {
        let pred: f64 = aug(x).iter().zip(&w).map(|(a, b)| a * b).sum();
        mse += (pred - y) * (pred - y);
    }
    mse / test.len() as f64
}

struct Criterion6Run {
    outcome: TrainOutcome,
    test_triple: MetricTriple,
    ls_test_mse: f64,
}

fn run_criterion_6(fixture_dir: &Path, run_dir: Option<&Path>) -> Criterion6Run {
    let cfg = FixtureConfig {
        sap_train: 2200,
        sap_test: 200,
        quali_train: 0,
        quali_validation: 0,
        quali_test: 0,
        noise_sigma: 0.1,
        seed: 606,
        ..FixtureConfig::default()
    };
    let fixture = generate_fixture(fixture_dir, &cfg).unwrap();
    let sap = load_manifest(&fixture.sap_manifest).unwrap();
    let plan = build_split_plan(&sap, "naturalness", 200, 6).unwrap();
    assert_eq!(plan.train_ids.len(), 2000);
    assert_eq!(plan.validation_ids.len(), 200);
    assert_eq!(plan.test_ids.len(), 200);

    let frames = ToyEncoderSource::new();
    let inputs = TrainInputs {
        sap_manifest: &sap,
        quali_manifest: None,
        frames: &frames,
        head: HeadConfig::new(32).with_hidden_dim(64).with_dropout(0.1),
        run_dir: run_dir.map(Path::to_path_buf),
    };
    let train_cfg = TrainConfig {
        learning_rate: 3e-3,
        weight_decay: 0.0,
        batch_size: 32,
        max_epochs: 200,
        patience: 20,
        seed: 60,
        ..TrainConfig::default()
    };
    let outcome = train_idt(&inputs, &plan, &ParadigmSpec::idt("naturalness"), &train_cfg).unwrap();
    let (_, test_triple) = evaluate(&outcome.checkpoint, &sap, &plan.test_ids, &frames).unwrap();

    let embed = |ids: &[String]| -> Vec<(Array1<f64>, f64)> {
        embed_records(&sap, ids, &frames, None)
            .unwrap()
            .into_iter()
            .map(|e| (e.embedding, e.target))
            .collect()
    };
    let ls_test_mse = least_squares_test_mse(&embed(&plan.train_ids), &embed(&plan.test_ids));

    Criterion6Run {
        outcome,
        test_triple,
        ls_test_mse,
    }
}

#[test]
fn criterion_6_synthetic_idt_convergence() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let run = run_criterion_6(dir.path(), None);

    println!(
        "[acceptance]   idt test mse {:.4}, lcc {:.4}, srcc {:.4}; least-squares floor {:.4}; {} epochs",
        run.test_triple.mse,
        run.test_triple.lcc.unwrap_or(f64::NAN),
        run.test_triple.srcc.unwrap_or(f64::NAN),
        run.ls_test_mse,
        run.outcome.summary.epochs_run,
    );
    assert!(
        run.ls_test_mse <= 0.05,
        "oracle floor {} should sit well under the 0.05 target",
        run.ls_test_mse
    );
    assert!(run.outcome.summary.epochs_run <= 200);
    assert!(
        run.test_triple.mse <= 0.05,
        "test mse {} exceeds 0.05",
        run.test_triple.mse
    );
    assert!(
        run.test_triple.lcc.unwrap() >= 0.90,
        "test lcc {} below 0.90",
        run.test_triple.lcc.unwrap()
    );

    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs_f64() < 300.0,
        "took {elapsed:?}, budget 5 min"
    );
    pass(6, "synthetic IDT convergence");
}

#[test]
fn criterion_8_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let run_a = run_criterion_6(&dir.path().join("fix_a"), Some(&dir.path().join("run_a")));
    let run_b = run_criterion_6(&dir.path().join("fix_b"), Some(&dir.path().join("run_b")));

    let digest = |outcome: &TrainOutcome| -> String {
        use sha2::{Digest, Sha256};
        let bytes =
            std::fs::read(outcome.run_dir.as_ref().unwrap().join("summary.json")).unwrap();
        hex::encode(Sha256::digest(bytes))
    };
    assert_eq!(digest(&run_a.outcome), digest(&run_b.outcome));
    assert_eq!(
        run_a.outcome.checkpoint.params_digest,
        run_b.outcome.checkpoint.params_digest
    );
    pass(8, "determinism");
}

// ---------------------------------------------------------------------------
// Criterion 7: fine-tuning from a shared-weight source domain beats IDT at
// an equal stage-2 budget, in a majority of seeds.
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_synthetic_transfer() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = FixtureConfig {
        sap_train: 1100,
        sap_test: 200,
        quali_train: 1200,
        quali_validation: 150,
        quali_test: 0,
        noise_sigma: 0.1,
        seed: 707,
        ..FixtureConfig::default()
    };
    let fixture = generate_fixture(dir.path(), &cfg).unwrap();
    let sap = load_manifest(&fixture.sap_manifest).unwrap();
    let quali = load_manifest(&fixture.quali_manifest).unwrap();
    let sap_plan = build_split_plan(&sap, "naturalness", 100, 7).unwrap();
    let quali_plan = build_split_plan(&quali, "overall_quality", 0, 7).unwrap();

    let frames = ToyEncoderSource::new();
    let head = HeadConfig::new(32).with_hidden_dim(64).with_dropout(0.1);

    let mut ft_wins = 0usize;
    for seed in 1..=5u64 {
        let stage2_cfg = TrainConfig {
            learning_rate: 1e-3,
            weight_decay: 0.0,
            batch_size: 32,
            max_epochs: 20,
            patience: 20,
            seed,
            ..TrainConfig::default()
        };
        let stage1_cfg = TrainConfig {
            max_epochs: 50,
            patience: 50,
            ..stage2_cfg
        };

        let idt_inputs = TrainInputs {
            sap_manifest: &sap,
            quali_manifest: None,
            frames: &frames,
            head,
            run_dir: None,
        };
        let idt = train_idt(
            &idt_inputs,
            &sap_plan,
            &ParadigmSpec::idt("naturalness"),
            &stage2_cfg,
        )
        .unwrap();
        let (_, idt_triple) = evaluate(&idt.checkpoint, &sap, &sap_plan.test_ids, &frames).unwrap();

        let ft_inputs = TrainInputs {
            sap_manifest: &sap,
            quali_manifest: Some(&quali),
            frames: &frames,
            head,
            run_dir: None,
        };
        let spec = ParadigmSpec::ft("naturalness", "overall_quality", mos_to_severity());
        let ft = train_ft(
            &ft_inputs,
            &sap_plan,
            &quali_plan,
            &spec,
            &stage1_cfg,
            &stage2_cfg,
        )
        .unwrap();
        let (_, ft_triple) = evaluate(&ft.checkpoint, &sap, &sap_plan.test_ids, &frames).unwrap();

        println!(
            "[acceptance]   seed {seed}: ft test mse {:.4} vs idt {:.4}",
            ft_triple.mse, idt_triple.mse
        );
        if ft_triple.mse <= idt_triple.mse {
            ft_wins += 1;
        }
    }
    assert!(
        ft_wins >= 3,
        "fine-tuning won only {ft_wins}/5 seeds; expected a majority"
    );
    pass(7, "synthetic transfer");
}

// ---------------------------------------------------------------------------
// Criterion 9: report grid fidelity, including the reference row.
// ---------------------------------------------------------------------------

#[test]
fn criterion_9_report_fidelity() {
    let cell = |method: Method, quali: Option<&str>, mse: f64, lcc: f64, srcc: f64| RunReport {
        sap_dimension: "intelligibility".into(),
        quali_dimension: quali.map(Into::into),
        method,
        encoder_id: "wav2vec2-base".into(),
        metrics: MetricTriple {
            mse,
            lcc: Some(lcc),
            srcc: Some(srcc),
            n: 716,
        },
        run_id: format!("{method}-ref"),
        config_digest: "d".into(),
    };
    let reports = vec![
        cell(Method::Idt, None, 0.348, 0.628, 0.482),
        cell(Method::Ft, Some("overall_quality"), 0.272, 0.751, 0.427),
        cell(Method::Jt, Some("overall_quality"), 0.408, 0.590, 0.446),
    ];

    let tsv = render_grid(&reports, GridFormat::Tsv).unwrap();
    let idt_row = tsv
        .lines()
        .find(|l| l.contains("\tIDT\t"))
        .expect("IDT row present");
    let cells: Vec<&str> = idt_row.split('\t').collect();
    assert_eq!(cells[0], "intelligibility");
    assert_eq!(&cells[3..6], &["0.348", "0.628", "0.482"]);
    assert_eq!(cells[3..6].join(" "), "0.348 0.628 0.482");

    // The plain-text grid carries the same three-decimal cells; the block
    // best (here FT's MSE/LCC, IDT's SRCC) gets the mark.
    let text = render_grid(&reports, GridFormat::Text).unwrap();
    assert!(text.contains("0.348"));
    assert!(text.contains("0.272*"));
    assert!(text.contains("0.482*"));
    assert!(text.contains("wav2vec 2.0 Base"));
    pass(9, "report fidelity");
}
