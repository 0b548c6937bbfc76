//! End-to-end tests of the `treestrip` binary: exit codes, artifact layout,
//! and byte-for-byte determinism of seeded re-runs.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BETHE: &str = r#"{"S": [[2]], "A": [[0.0]], "disorder": {"kind": "none"}, "lambda": 0.0}"#;
const TWO_LABEL: &str = r#"{"S": [[2, 1], [2, 2]], "A": [[-0.5, 0.0], [0.0, 0.5]], "disorder": {"kind": "diagonal-iid", "law": "uniform", "half_width": 1.0}, "lambda": 0.1}"#;
const GOLDEN_MEAN: &str = r#"{"S": [[0, 1], [1, 1]], "A": [[0.0, 0.0], [0.0, 0.0]], "disorder": {"kind": "none"}, "lambda": 0.0}"#;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_treestrip"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_model(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_same_bytes(a: &Path, b: &Path) {
    assert_eq!(
        fs::read(a).unwrap(),
        fs::read(b).unwrap(),
        "{} and {} differ",
        a.display(),
        b.display()
    );
}

#[test]
fn check_passes_admissible_models_and_flags_violations() {
    let dir = tempfile::tempdir().unwrap();
    let bethe = write_model(dir.path(), "bethe.json", BETHE);
    let golden = write_model(dir.path(), "golden.json", GOLDEN_MEAN);

    let out = run(&["check", "--model", &bethe]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("all assumptions hold"));

    let out = run(&["check", "--model", &golden]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("S1 violated"), "stdout: {}", stdout(&out));
}

#[test]
fn check_writes_report_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path(), "two.json", TWO_LABEL);
    let out_dir = dir.path().join("report");
    let out = run(&["check", "--model", &model, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));

    let report = read_json(&out_dir.join("assumption_report.json"));
    assert_eq!(report["all_hold"], serde_json::Value::Bool(true));
    assert_eq!(report["k"], serde_json::json!(2));

    let manifest = read_json(&out_dir.join("run_manifest.json"));
    assert_eq!(manifest["command"], "check");
    assert_eq!(manifest["model"]["S"][0][1], serde_json::json!(1));
}

#[test]
fn malformed_or_missing_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_model(dir.path(), "bad.json", "{not json");

    let out = run(&["check", "--model", &bad]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));

    let missing = dir.path().join("nope.json");
    let out = run(&["check", "--model", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    // Missing required flag (clap usage error).
    let out = run(&["simulate", "--model", &bad]);
    assert_eq!(out.status.code(), Some(2));

    // Malformed grid triple.
    let model = write_model(dir.path(), "bethe.json", BETHE);
    let out = run(&[
        "free-spectrum",
        "--model",
        &model,
        "--out",
        dir.path().join("x").to_str().unwrap(),
        "--grid",
        "1:2",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn free_spectrum_finds_the_bethe_band_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path(), "bethe.json", BETHE);
    let d1 = dir.path().join("run1");
    let d2 = dir.path().join("run2");
    for d in [&d1, &d2] {
        let out = run(&[
            "free-spectrum",
            "--model",
            &model,
            "--out",
            d.to_str().unwrap(),
            "--grid",
            "-3.2:3.2:0.1",
        ]);
        assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    }
    for name in ["gamma_grid.csv", "i_s_intervals.json", "run_manifest.json"] {
        assert_same_bytes(&d1.join(name), &d2.join(name));
    }

    let intervals = read_json(&d1.join("i_s_intervals.json"));
    assert_eq!(intervals["count"], serde_json::json!(1));
    let band = 2.0 * 2.0f64.sqrt();
    let lo = intervals["intervals"][0]["lo"].as_f64().unwrap();
    let hi = intervals["intervals"][0]["hi"].as_f64().unwrap();
    assert!((lo + band).abs() < 0.15, "lo = {lo}");
    assert!((hi - band).abs() < 0.15, "hi = {hi}");

    let csv = fs::read_to_string(d1.join("gamma_grid.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "e,label,gamma_re,gamma_im,robust,eta_final,last_delta,in_i_s"
    );
    assert!(csv.lines().count() > 60);
    assert!(!csv.contains(';'), "decimal separator must be '.'");
}

#[test]
fn window_scan_reports_margins() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path(), "bethe.json", BETHE);
    let out_dir = dir.path().join("win");
    let out = run(&[
        "window",
        "--model",
        &model,
        "--out",
        out_dir.to_str().unwrap(),
        "--grid",
        "-1.0:1.0:0.5",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));

    let csv = fs::read_to_string(out_dir.join("window_grid.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.ends_with("frechet_margin"));
    assert_eq!(csv.lines().count(), 6);

    let report = read_json(&out_dir.join("window_report.json"));
    assert_eq!(report["counts"]["in_window"], serde_json::json!(5));
    let margin = report["min_frechet_margin"].as_f64().unwrap();
    assert!((margin - 0.5).abs() < 1e-6, "margin = {margin}");
}

#[test]
fn simulate_is_reproducible_for_a_fixed_seed() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path(), "two.json", TWO_LABEL);
    let d1 = dir.path().join("mc1");
    let d2 = dir.path().join("mc2");
    for d in [&d1, &d2] {
        let out = run(&[
            "simulate",
            "--model",
            &model,
            "--out",
            d.to_str().unwrap(),
            "--energy",
            "0.25",
            "--pool",
            "48",
            "--seed",
            "7",
            "--eta-ladder",
            "0.5:0.5:0.2",
        ]);
        assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    }
    for name in ["ladder.csv", "ac_indicator.json", "run_manifest.json"] {
        assert_same_bytes(&d1.join(name), &d2.join(name));
    }

    let indicator = read_json(&d1.join("ac_indicator.json"));
    assert_eq!(indicator["rungs"].as_array().unwrap().len(), 2);
    assert_eq!(indicator["lambda"], serde_json::json!(0.1));

    let csv = fs::read_to_string(d1.join("ladder.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "eta,trace_second,trace_second_stderr,generations,stabilized,label_0,label_1"
    );

    // A different seed must produce a different pool trajectory.
    let d3 = dir.path().join("mc3");
    let out = run(&[
        "simulate",
        "--model",
        &model,
        "--out",
        d3.to_str().unwrap(),
        "--energy",
        "0.25",
        "--pool",
        "48",
        "--seed",
        "8",
        "--eta-ladder",
        "0.5:0.5:0.2",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_ne!(
        fs::read(d1.join("ladder.csv")).unwrap(),
        fs::read(d3.join("ladder.csv")).unwrap()
    );
}

#[test]
fn oracle_cross_validates_recursion_against_direct_solve() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path(), "two.json", TWO_LABEL);
    let out_dir = dir.path().join("orc");
    let out = run(&[
        "oracle",
        "--model",
        &model,
        "--out",
        out_dir.to_str().unwrap(),
        "--depth",
        "3",
        "--seed",
        "11",
        "--grid",
        "-1.0:1.0:0.5",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));

    let report = read_json(&out_dir.join("oracle_report.json"));
    let dev = report["max_abs_deviation"].as_f64().unwrap();
    assert!(dev < 1e-9, "deviation = {dev}");
    assert!(report["dos"]["sup_diff"].as_f64().unwrap().is_finite());

    let csv = fs::read_to_string(out_dir.join("recursion_vs_solve.csv")).unwrap();
    assert_eq!(csv.lines().count(), 10); // header + 3 depths x 3 spectral points
    assert!(out_dir.join("dos_comparison.csv").exists());
}

#[test]
fn susy_verify_passes_and_enforces_the_generator_cap() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("susy");
    let out = run(&[
        "susy-verify",
        "--out",
        out_dir.to_str().unwrap(),
        "--seed",
        "20260816",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let report = read_json(&out_dir.join("susy_report.json"));
    assert_eq!(report["all_pass"], serde_json::Value::Bool(true));
    assert_eq!(report["checks"].as_array().unwrap().len(), 18);

    let out = run(&[
        "susy-verify",
        "--out",
        dir.path().join("rejected").to_str().unwrap(),
        "--m",
        "3",
        "--n",
        "2",
        "--seed",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("cap exceeded"), "stderr: {}", stderr(&out));
}

#[test]
fn single_dimension_susy_run_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("susy21");
    let out = run(&[
        "susy-verify",
        "--out",
        out_dir.to_str().unwrap(),
        "--m",
        "2",
        "--n",
        "1",
        "--seed",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let report = read_json(&out_dir.join("susy_report.json"));
    assert_eq!(report["checks"].as_array().unwrap().len(), 6);
    assert_eq!(report["dimensions"], serde_json::json!([[2, 1]]));
}
