//! End-to-end tests of the `sevkit` binary: every command, the documented
//! exit codes, and seed-fixed rerun stability.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sevkit"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn assert_code(output: &Output, expected: i32) {
    let stderr = String::from_utf8_lossy(&output.stderr);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert_eq!(
        output.status.code(),
        Some(expected),
        "stdout:\n{stdout}\nstderr:\n{stderr}"
    );
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn p(path: &Path) -> String {
    path.to_string_lossy().into_owned()
}

/// Small deterministic fixture shared by the training tests.
fn make_fixture(dir: &Path, seed: u64) -> (PathBuf, PathBuf) {
    let out = run(&[
        "fixture",
        "--out",
        &p(dir),
        "--seed",
        &seed.to_string(),
        "--sap-train",
        "90",
        "--sap-test",
        "24",
        "--quali-train",
        "80",
        "--quali-validation",
        "16",
        "--quali-test",
        "0",
    ]);
    assert_code(&out, 0);
    (dir.join("sap.jsonl"), dir.join("quali.jsonl"))
}

const FAST_TRAIN: &[&str] = &[
    "--lr",
    "0.003",
    "--weight-decay",
    "0",
    "--batch-size",
    "16",
    "--max-epochs",
    "8",
    "--patience",
    "8",
    "--hidden-dim",
    "32",
    "--seed",
    "5",
];

#[test]
fn prepare_writes_plan_and_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (sap, _) = make_fixture(&dir.path().join("fix"), 21);
    let plan = dir.path().join("plan.json");
    let out = run(&[
        "prepare",
        "--manifest",
        &p(&sap),
        "--dimension",
        "naturalness",
        "--validation-size",
        "15",
        "--seed",
        "3",
        "--out",
        &p(&plan),
    ]);
    assert_code(&out, 0);
    assert!(stdout_of(&out).contains("train 75, validation 15, test 24"));
    let text = std::fs::read_to_string(&plan).unwrap();
    assert!(text.contains("\"seed\": 3"));

    // Seed-fixed rerun produces byte-identical artifacts.
    let plan_again = dir.path().join("plan_again.json");
    let out = run(&[
        "prepare",
        "--manifest",
        &p(&sap),
        "--dimension",
        "naturalness",
        "--validation-size",
        "15",
        "--seed",
        "3",
        "--out",
        &p(&plan_again),
    ]);
    assert_code(&out, 0);
    assert_eq!(
        std::fs::read(&plan).unwrap(),
        std::fs::read(&plan_again).unwrap()
    );
}

#[test]
fn prepare_missing_manifest_is_a_usage_error() {
    let out = run(&[
        "prepare",
        "--manifest",
        "/definitely/not/here.jsonl",
        "--dimension",
        "naturalness",
        "--out",
        "/tmp/unused-plan.json",
    ]);
    assert_code(&out, 2);
}

#[test]
fn prepare_zero_validation_gives_empty_set() {
    let dir = tempfile::tempdir().unwrap();
    let (sap, _) = make_fixture(&dir.path().join("fix"), 22);
    let plan = dir.path().join("plan.json");
    let out = run(&[
        "prepare",
        "--manifest",
        &p(&sap),
        "--dimension",
        "naturalness",
        "--validation-size",
        "0",
        "--out",
        &p(&plan),
    ]);
    assert_code(&out, 0);
    assert!(stdout_of(&out).contains("validation 0"));
}

fn train_idt(sap: &Path, run_dir: &Path) -> Output {
    let mut args = vec![
        "train",
        "--paradigm",
        "idt",
        "--encoder",
        "toy",
        "--manifest",
    ];
    let sap_s = p(sap);
    let run_s = p(run_dir);
    args.push(&sap_s);
    args.extend(["--dimension", "naturalness", "--validation-size", "15"]);
    args.extend(FAST_TRAIN);
    args.extend(["--run-dir", &run_s]);
    run(&args)
}

#[test]
fn train_idt_writes_run_dir_with_decreasing_loss_and_stable_digest() {
    let dir = tempfile::tempdir().unwrap();
    let (sap, _) = make_fixture(&dir.path().join("fix"), 23);

    let run_a = dir.path().join("run_a");
    let out_a = train_idt(&sap, &run_a);
    assert_code(&out_a, 0);

    for artifact in [
        "config.json",
        "epochs.tsv",
        "checkpoint_best.json",
        "checkpoint_last.json",
        "summary.json",
    ] {
        assert!(run_a.join(artifact).exists(), "missing {artifact}");
    }

    // Epoch loss goes down over the run.
    let log = std::fs::read_to_string(run_a.join("epochs.tsv")).unwrap();
    let losses: Vec<f64> = log
        .lines()
        .skip(1)
        .map(|l| l.split('\t').nth(2).unwrap().parse().unwrap())
        .collect();
    assert!(losses.len() >= 2);
    assert!(
        losses.last().unwrap() < losses.first().unwrap(),
        "loss did not decrease: {losses:?}"
    );

    // Same seed, fresh directory: identical summary digest.
    let out_b = train_idt(&sap, &dir.path().join("run_b"));
    assert_code(&out_b, 0);
    let digest_line = |s: &str| {
        s.lines()
            .find(|l| l.starts_with("summary digest:"))
            .unwrap()
            .to_string()
    };
    assert_eq!(digest_line(&stdout_of(&out_a)), digest_line(&stdout_of(&out_b)));

    // Reusing a run directory is refused.
    let reused = train_idt(&sap, &run_a);
    assert_code(&reused, 1);
}

#[test]
fn train_ft_requires_quali_flags() {
    let dir = tempfile::tempdir().unwrap();
    let (sap, _) = make_fixture(&dir.path().join("fix"), 24);
    let out = run(&[
        "train",
        "--paradigm",
        "ft",
        "--manifest",
        &p(&sap),
        "--dimension",
        "naturalness",
    ]);
    assert_code(&out, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--quali-manifest"));
}

#[test]
fn train_external_encoder_without_features_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let (sap, _) = make_fixture(&dir.path().join("fix"), 25);
    let out = run(&[
        "train",
        "--paradigm",
        "idt",
        "--encoder",
        "wav2vec2-base",
        "--manifest",
        &p(&sap),
        "--dimension",
        "naturalness",
    ]);
    assert_code(&out, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--features-dir"));
}

#[test]
fn train_config_file_mirrors_flags() {
    let dir = tempfile::tempdir().unwrap();
    let (sap, _) = make_fixture(&dir.path().join("fix"), 26);
    let run_dir = dir.path().join("run_cfg");
    let config = serde_json::json!({
        "paradigm": "idt",
        "encoder": "toy",
        "manifest": sap,
        "dimension": "naturalness",
        "validation_size": 15,
        "lr": 0.003,
        "weight_decay": 0.0,
        "batch_size": 16,
        "max_epochs": 8,
        "patience": 8,
        "hidden_dim": 32,
        "seed": 5,
        "run_dir": run_dir,
    });
    let config_path = dir.path().join("train.json");
    std::fs::write(&config_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();

    let out = run(&["train", "--config", &p(&config_path)]);
    assert_code(&out, 0);
    assert!(run_dir.join("summary.json").exists());

    // Flag overrides the file: a different run dir wins.
    let override_dir = dir.path().join("run_override");
    let out = run(&[
        "train",
        "--config",
        &p(&config_path),
        "--run-dir",
        &p(&override_dir),
    ]);
    assert_code(&out, 0);
    assert!(override_dir.join("summary.json").exists());
}

#[test]
fn full_pipeline_ft_jt_eval_report() {
    let dir = tempfile::tempdir().unwrap();
    let (sap, quali) = make_fixture(&dir.path().join("fix"), 27);

    let train = |paradigm: &str, run_dir: &Path, extra: &[&str]| {
        let mut args = vec!["train", "--paradigm", paradigm, "--manifest"];
        let sap_s = p(&sap);
        let quali_s = p(&quali);
        let run_s = p(run_dir);
        args.push(&sap_s);
        args.extend([
            "--dimension",
            "naturalness",
            "--validation-size",
            "15",
            "--quali-manifest",
        ]);
        args.push(&quali_s);
        args.extend(["--quali-dimension", "overall_quality"]);
        args.extend(FAST_TRAIN);
        args.extend(["--run-dir", &run_s]);
        args.extend_from_slice(extra);
        let out = run(&args);
        assert_code(&out, 0);
        out
    };

    let ft_run = dir.path().join("run_ft");
    train("ft", &ft_run, &["--stage1-max-epochs", "6"]);
    assert!(ft_run.join("checkpoint_stage1_best.json").exists());

    let jt_run = dir.path().join("run_jt");
    train("jt", &jt_run, &["--jt-size", "match"]);

    // Evaluate both checkpoints on the test split.
    let eval = |ckpt: &Path, report: &Path, preds: &Path| {
        let out = run(&[
            "eval",
            "--checkpoint",
            &p(ckpt),
            "--manifest",
            &p(&sap),
            "--split",
            "test",
            "--report",
            &p(report),
            "--predictions",
            &p(preds),
        ]);
        assert_code(&out, 0);
        out
    };
    let ft_report = dir.path().join("ft_report.json");
    let jt_report = dir.path().join("jt_report.json");
    let out = eval(
        &ft_run.join("checkpoint_best.json"),
        &ft_report,
        &dir.path().join("ft_preds.tsv"),
    );
    // Converged synthetic checkpoint: strong correlation expected.
    let text = stdout_of(&out);
    let lcc: f64 = text
        .split("lcc ")
        .nth(1)
        .unwrap()
        .split(',')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!(lcc > 0.9, "lcc {lcc} from: {text}");
    eval(
        &jt_run.join("checkpoint_best.json"),
        &jt_report,
        &dir.path().join("jt_preds.tsv"),
    );

    // Predictions have the id<TAB>prediction<TAB>truth shape.
    let preds = std::fs::read_to_string(dir.path().join("ft_preds.tsv")).unwrap();
    let first = preds.lines().next().unwrap();
    assert_eq!(first.split('\t').count(), 3);
    assert!(first.starts_with("sap-"));

    // Grid over both reports renders one row per method.
    let grid_path = dir.path().join("grid.tsv");
    let out = run(&[
        "report",
        "--format",
        "tsv",
        "--out",
        &p(&grid_path),
        &p(&ft_report),
        &p(&jt_report),
    ]);
    assert_code(&out, 0);
    let grid = std::fs::read_to_string(&grid_path).unwrap();
    assert_eq!(grid.lines().count(), 3);
    assert!(grid.contains("\tFT\t"));
    assert!(grid.contains("\tJT\t"));

    // Text format goes to stdout by default.
    let out = run(&["report", &p(&ft_report), &p(&jt_report)]);
    assert_code(&out, 0);
    assert!(stdout_of(&out).contains("QualiSpeech"));
}

#[test]
fn eval_rejects_mismatched_encoder_features() {
    let dir = tempfile::tempdir().unwrap();
    let (sap, _) = make_fixture(&dir.path().join("fix"), 28);
    let run_dir = dir.path().join("run");
    assert_code(&train_idt(&sap, &run_dir), 0);

    // Features claiming to come from a different encoder.
    let feat_dir = dir.path().join("feats");
    std::fs::create_dir_all(&feat_dir).unwrap();
    let frames = sevkit::encoder::FrameFeatures::new(
        ndarray::Array2::from_shape_vec((1, 32), vec![0.1; 32]).unwrap(),
        vec![true],
        "hubert-base".into(),
    )
    .unwrap();
    let manifest = sevkit::corpus::load_manifest(&sap).unwrap();
    for record in manifest.records() {
        sevkit::encoder::write_frames_binary(
            &feat_dir.join(format!("{}.bin", record.id)),
            &frames,
        )
        .unwrap();
    }

    let out = run(&[
        "eval",
        "--checkpoint",
        &p(&run_dir.join("checkpoint_best.json")),
        "--manifest",
        &p(&sap),
        "--split",
        "test",
        "--features-dir",
        &p(&feat_dir),
        "--report",
        &p(&dir.path().join("r.json")),
        "--predictions",
        &p(&dir.path().join("p.tsv")),
    ]);
    assert_code(&out, 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("encoder mismatch"));
}

#[test]
fn eval_empty_split_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let (sap, quali) = make_fixture(&dir.path().join("fix"), 29);
    let run_dir = dir.path().join("run");
    assert_code(&train_idt(&sap, &run_dir), 0);

    // The quality manifest has no clinical-dimension records at all.
    let out = run(&[
        "eval",
        "--checkpoint",
        &p(&run_dir.join("checkpoint_best.json")),
        "--manifest",
        &p(&quali),
        "--split",
        "test",
        "--report",
        &p(&dir.path().join("r.json")),
        "--predictions",
        &p(&dir.path().join("p.tsv")),
    ]);
    assert_code(&out, 1);
}

#[test]
fn report_conflicting_cells_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let mk = |run_id: &str, mse: f64| {
        serde_json::json!({
            "sap_dimension": "naturalness",
            "quali_dimension": null,
            "method": "IDT",
            "encoder_id": "toy",
            "metrics": {"mse": mse, "lcc": 0.9, "srcc": 0.9, "n": 10},
            "run_id": run_id,
            "config_digest": "d",
        })
    };
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    std::fs::write(&a, mk("run-a", 0.5).to_string()).unwrap();
    std::fs::write(&b, mk("run-b", 0.7).to_string()).unwrap();
    let out = run(&["report", &p(&a), &p(&b)]);
    assert_code(&out, 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("run-a") && err.contains("run-b"));
}

#[test]
fn stats_writes_levels_and_chart() {
    let dir = tempfile::tempdir().unwrap();
    let fix = dir.path().join("fix");
    let out = run(&[
        "fixture",
        "--out",
        &p(&fix),
        "--seed",
        "31",
        "--sap-train",
        "60",
        "--sap-test",
        "12",
        "--quali-train",
        "40",
        "--quali-validation",
        "0",
        "--quali-test",
        "0",
        "--round-scores",
    ]);
    assert_code(&out, 0);

    let table_path = dir.path().join("hist.tsv");
    let chart_path = dir.path().join("hist.svg");
    let out = run(&[
        "stats",
        "--manifest",
        &p(&fix.join("sap.jsonl")),
        "--dimension",
        "naturalness",
        "--out",
        &p(&table_path),
        "--chart",
        &p(&chart_path),
    ]);
    assert_code(&out, 0);

    let table = std::fs::read_to_string(&table_path).unwrap();
    let rows: Vec<(i64, usize)> = table
        .lines()
        .map(|l| {
            let mut split = l.split('\t');
            (
                split.next().unwrap().parse().unwrap(),
                split.next().unwrap().parse().unwrap(),
            )
        })
        .collect();
    assert_eq!(rows.len(), 7);
    assert_eq!(rows.iter().map(|(l, _)| *l).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5, 6, 7]);
    assert_eq!(rows.iter().map(|(_, c)| *c).sum::<usize>(), 72);
    assert!(std::fs::read_to_string(&chart_path).unwrap().starts_with("<svg"));

    // A MOS-scale dimension renders five levels.
    let out = run(&[
        "stats",
        "--manifest",
        &p(&fix.join("quali.jsonl")),
        "--dimension",
        "overall_quality",
    ]);
    assert_code(&out, 1); // continuous MOS scores: not integer levels
}

#[test]
fn stats_mos_levels_and_mixed_scale_error() {
    let dir = tempfile::tempdir().unwrap();
    let line = |id: &str, dim: &str, score: f64, smin: f64, smax: f64, pol: &str| {
        format!(
            r#"{{"id":"{id}","audio_path":"a.wav","corpus":"quali","dimension":"{dim}","score":{score},"scale_min":{smin},"scale_max":{smax},"polarity":"{pol}","split":"train"}}"#
        )
    };
    let manifest = dir.path().join("m.jsonl");
    std::fs::write(
        &manifest,
        [
            line("a", "overall_quality", 1.0, 1.0, 5.0, "higher_is_better"),
            line("b", "overall_quality", 5.0, 1.0, 5.0, "higher_is_better"),
            line("c", "mixed", 3.0, 1.0, 5.0, "higher_is_better"),
            line("d", "mixed", 3.0, 1.0, 7.0, "higher_is_worse"),
        ]
        .join("\n"),
    )
    .unwrap();

    let out = run(&["stats", "--manifest", &p(&manifest), "--dimension", "overall_quality"]);
    assert_code(&out, 0);
    assert_eq!(stdout_of(&out).lines().count(), 5);

    let out = run(&["stats", "--manifest", &p(&manifest), "--dimension", "mixed"]);
    assert_code(&out, 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("mix"));
}

#[test]
fn fixture_is_rerun_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out_dir in [&a, &b] {
        let out = run(&[
            "fixture",
            "--out",
            &p(out_dir),
            "--seed",
            "99",
            "--sap-train",
            "20",
            "--sap-test",
            "5",
            "--quali-train",
            "10",
            "--quali-validation",
            "2",
            "--quali-test",
            "2",
        ]);
        assert_code(&out, 0);
    }
    assert_eq!(
        std::fs::read(a.join("sap.jsonl")).unwrap(),
        std::fs::read(b.join("sap.jsonl")).unwrap()
    );
    assert_eq!(
        std::fs::read(a.join("quali.jsonl")).unwrap(),
        std::fs::read(b.join("quali.jsonl")).unwrap()
    );
}

#[test]
fn run_root_env_var_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let (sap, _) = make_fixture(&dir.path().join("fix"), 33);
    let root = dir.path().join("all_runs");

    let sap_s = p(&sap);
    let mut args = vec![
        "train",
        "--paradigm",
        "idt",
        "--manifest",
        &sap_s,
        "--dimension",
        "naturalness",
        "--validation-size",
        "15",
    ];
    args.extend(FAST_TRAIN);
    let out = bin()
        .args(&args)
        .env("SEVKIT_RUN_ROOT", &root)
        .output()
        .unwrap();
    assert_code(&out, 0);
    let listed: Vec<_> = std::fs::read_dir(&root).unwrap().collect();
    assert_eq!(listed.len(), 1);
}
