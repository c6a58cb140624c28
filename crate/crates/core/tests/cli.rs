use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bdc::cli::{load_config_file, read_labels, DistanceKind};

fn bdc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bdc")).args(args).output().unwrap()
}

fn blobs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/blobs.csv")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn cluster(out: &Path, seed: &str, extra: &[&str]) -> Output {
    let input = blobs();
    let mut args = vec!["cluster", "--input", s(&input), "--k", "3", "--iters", "300", "--seed", seed, "--out", s(out)];
    args.extend_from_slice(extra);
    bdc(&args)
}

#[test]
fn seeded_runs_are_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(cluster(&a, "5", &[]).status.success());
    assert!(cluster(&b, "5", &["--threads", "1"]).status.success());
    for f in ["labels.csv", "coassign.csv", "assign_probs.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["n"], 100);
    assert_eq!(summary["config"]["seed"], 5);
    assert_eq!(summary["n_draws"], 240);
}

#[test]
fn missing_input_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bdc(&["cluster", "--input", "/no/such/file.csv", "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/file.csv"));
}

#[test]
fn unknown_table_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bdc(&["replicate", "table9", "--out", s(&tmp.path().join("t.csv"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_sampler_settings_are_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(cluster(tmp.path(), "1", &["--stepsize", "-1"]).status.code(), Some(2));
    assert_eq!(cluster(tmp.path(), "1", &["--chains", "0"]).status.code(), Some(2));
}

#[test]
fn precomputed_two_groups_are_recovered() {
    let tmp = tempfile::tempdir().unwrap();
    // points 0..10 near 0, 10..20 near 10, on a line
    let x: Vec<f64> = (0..20).map(|i| if i < 10 { 0.1 * i as f64 } else { 10.0 + 0.1 * i as f64 }).collect();
    let mut csv = String::new();
    for a in &x {
        let row: Vec<String> = x.iter().map(|b| format!("{}", (a - b).abs())).collect();
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    let input = tmp.path().join("d.csv");
    std::fs::write(&input, csv).unwrap();
    let out_dir = tmp.path().join("out");
    let out = bdc(&[
        "cluster", "--input", s(&input), "--distance", "precomputed", "--k", "2", "--iters", "400", "--seed", "3",
        "--out", s(&out_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let labels = read_labels(&out_dir.join("labels.csv")).unwrap();
    let truth: Vec<usize> = (0..20).map(|i| i / 10).collect();
    assert_eq!(labels, truth);
}

#[test]
fn eval_of_identical_labels() {
    let truth = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/blobs_truth.csv");
    let out = bdc(&["eval", "--truth", s(&truth), "--labels", s(&truth)]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((report["ari"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((report["nmi"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn simulate_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let out = bdc(&["simulate", "--preset", "skew", "--n", "50", "--p", "3", "--seed", "9", "--out", s(dir)]);
        assert!(out.status.success());
    }
    for f in ["data.csv", "truth.csv", "spec.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let data = std::fs::read_to_string(a.join("data.csv")).unwrap();
    assert_eq!(data.lines().count(), 50);
    assert_eq!(data.lines().next().unwrap().split(',').count(), 3);
    assert_eq!(read_labels(&a.join("truth.csv")).unwrap().len(), 50);
}

#[test]
fn replicate_writes_table_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("table.csv");
    let out = bdc(&["replicate", "table1", "--reps", "2", "--iters", "100", "--dims", "1,2", "--out", s(&path)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "p,bdc_mean,bdc_lo,bdc_hi,gmm_mean,gmm_lo,gmm_hi");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("1,") && lines[2].starts_with("2,"));
}

#[test]
fn key_value_config_files() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("run.conf");
    std::fs::write(
        &path,
        "# settings\ninput = \"data.csv\"\ndistance = \"arccos\"\nk = 4\nsubspace.max_iters = 50 # shorter\n",
    )
    .unwrap();
    let cfg = load_config_file(&path).unwrap();
    assert_eq!(cfg.k, 4);
    assert_eq!(cfg.distance, DistanceKind::Arccos);
    assert_eq!(cfg.subspace.max_iters, 50);
    assert_eq!(cfg.input.as_deref(), Some(Path::new("data.csv")));

    std::fs::write(&path, "k = 3\nbogus = 1\n").unwrap();
    assert!(load_config_file(&path).is_err());
}
