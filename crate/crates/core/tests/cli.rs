use std::path::Path;
use std::process::{Command, Output};

fn cpbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cpbench")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn generate(dir: &Path, name: &str, extra: &[&str]) -> String {
    let path = dir.join(name).display().to_string();
    let mut args = vec!["generate", "--out", &path, "--samples", "600", "--classes", "6"];
    args.extend_from_slice(extra);
    let out = cpbench(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    path
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&cpbench(&["--help"])), 0);
    assert_eq!(code(&cpbench(&["--version"])), 0);
}

#[test]
fn usage_errors_exit_three() {
    assert_eq!(code(&cpbench(&[])), 3);
    assert_eq!(code(&cpbench(&["frobnicate"])), 3);
    assert_eq!(code(&cpbench(&["conformalize"])), 3);
}

#[test]
fn conformalize_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let input = generate(dir.path(), "m.cpl", &["--seed", "1"]);
    let out_dir = dir.path().display().to_string();
    let out = cpbench(&["conformalize", &input, "--method", "aps", "--out", &out_dir]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("report.json"));
    assert_eq!(report["record"]["method"], "aps");
    assert_eq!(report["record"]["n_cal"], 300);
    assert!(report["per_class_coverage"].is_object());
    assert_eq!(report["set_sizes"].as_array().unwrap().len(), 300);

    let out = cpbench(&["conformalize", &input, "--format", "csv", "--out", &out_dir]);
    assert_eq!(code(&out), 0);
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(csv.starts_with("alpha,method,lambda,kreg,u_mode,T,seed,"));
}

#[test]
fn bad_parameters_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let input = generate(dir.path(), "m.cpl", &[]);
    for bad in [
        vec!["--alpha", "1.5"],
        vec!["--alpha", "0"],
        vec!["--method", "nope"],
        vec!["--lambda", "-1"],
        vec!["--cal-frac", "0"],
        vec!["--u-mode", "fixed:2"],
        vec!["--recipe", "imagenet"],
    ] {
        let mut args = vec!["conformalize", input.as_str()];
        args.extend(bad.iter().copied());
        assert_eq!(code(&cpbench(&args)), 3, "{bad:?}");
    }
}

#[test]
fn temperature_on_probabilities_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let input = generate(dir.path(), "p.cpl", &[]);
    assert_eq!(code(&cpbench(&["conformalize", &input, "--temperature", "1.5"])), 3);
    assert_eq!(code(&cpbench(&["sweep-temperature", &input])), 3);
}

#[test]
fn broken_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let garbage = dir.path().join("garbage.cpl");
    std::fs::write(&garbage, b"not a cpl file at all, nope").unwrap();
    assert_eq!(code(&cpbench(&["conformalize", garbage.to_str().unwrap()])), 2);
    assert_eq!(code(&cpbench(&["inspect", dir.path().join("missing.cpl").to_str().unwrap()])), 2);

    let good = generate(dir.path(), "g.cpl", &[]);
    let mut bytes = std::fs::read(&good).unwrap();
    bytes.truncate(bytes.len() - 3);
    let short = dir.path().join("short.cpl");
    std::fs::write(&short, bytes).unwrap();
    assert_eq!(code(&cpbench(&["inspect", short.to_str().unwrap()])), 2);
}

#[test]
fn sweep_temperature_over_default_grid() {
    let dir = tempfile::tempdir().unwrap();
    let input = generate(dir.path(), "l.cpl", &["--logits"]);
    let out_dir = dir.path().display().to_string();
    let out = cpbench(&["sweep-temperature", &input, "--out", &out_dir]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_json(&dir.path().join("sweep.json"));
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 14);
    assert!((rows[0]["record"]["T"].as_f64().unwrap() - 0.85).abs() < 1e-12);
    assert!((rows[13]["record"]["T"].as_f64().unwrap() - 2.0).abs() < 1e-12);

    let out = cpbench(&["sweep-temperature", &input, "--t-grid", "0.5:1.5:3", "--format", "csv", "--out", &out_dir]);
    assert_eq!(code(&out), 0);
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn shift_eval_writes_coverage_vector() {
    let dir = tempfile::tempdir().unwrap();
    let shifted = dir.path().join("test.cpl").display().to_string();
    let cal = generate(dir.path(), "cal.cpl", &["--shifted-out", &shifted, "--shift-drop", "0.3", "--noise-scale", "1"]);
    let out_dir = dir.path().display().to_string();
    let out = cpbench(&["shift-eval", &cal, &shifted, "--method", "lac", "--out", &out_dir]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("shift_report.json"));
    assert_eq!(report["record"]["n_cal"], 600);
    assert_eq!(report["record"]["n_test"], 600);
    let per_class = std::fs::read_to_string(dir.path().join("shift_report_per_class_coverage.csv")).unwrap();
    assert_eq!(per_class.lines().next(), Some("class,coverage"));

    let other = dir.path().join("k9.cpl").display().to_string();
    assert_eq!(code(&cpbench(&["generate", "--out", &other, "--classes", "9", "--samples", "50"])), 0);
    assert_eq!(code(&cpbench(&["shift-eval", &cal, &other])), 2);
}

#[test]
fn compare_with_worst_class_and_delta() {
    let dir = tempfile::tempdir().unwrap();
    let a = generate(dir.path(), "a.cpl", &["--accuracy", "0.9", "--seed", "1"]);
    let b = generate(dir.path(), "b.cpl", &["--accuracy", "0.5", "--seed", "1"]);
    let out_dir = dir.path().display().to_string();
    let named_b = format!("weak={b}");
    let out = cpbench(&[
        "compare", &a, &named_b, "--methods", "lac,aps", "--worst-class", "a/lac", "weak/lac", "--delta", "a/aps",
        "a/lac", "--out", &out_dir,
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(
        lines.next(),
        Some("model,accuracy,lac_avg_set_size,lac_mccc,lac_cov_gap,lac_coverage,aps_avg_set_size,aps_mccc,aps_cov_gap,aps_coverage")
    );
    assert!(lines.next().unwrap().starts_with("a,"));
    assert!(lines.next().unwrap().starts_with("weak,"));
    let worst = read_json(&dir.path().join("worst_class.json"));
    assert_eq!(worst["run_a"], "a/lac");
    assert!(worst["result"]["class"].is_u64());
    assert!(worst["result"]["b_coverage"].is_f64());
    let delta = read_json(&dir.path().join("size_delta.json"));
    let hist = delta["result"]["histogram"].as_object().unwrap();
    let total = delta["result"]["zeros"].as_u64().unwrap() + hist.values().map(|v| v.as_u64().unwrap()).sum::<u64>();
    assert_eq!(total, 300);

    assert_eq!(code(&cpbench(&["compare", &a, "--worst-class", "zzz/lac", "a/lac", "--out", &out_dir])), 3);
}

#[test]
fn compare_same_file_twice() {
    let dir = tempfile::tempdir().unwrap();
    let a = generate(dir.path(), "a.cpl", &[]);
    let out_dir = dir.path().display().to_string();
    let out = cpbench(&["compare", &a, &a, "--out", &out_dir]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[1].starts_with("a#2,"));
    assert_eq!(rows[0].split_once(',').unwrap().1, rows[1].split_once(',').unwrap().1);
}

#[test]
fn inspect_prints_summary() {
    let dir = tempfile::tempdir().unwrap();
    let input = generate(dir.path(), "m.cpl", &["--logits"]);
    let out = cpbench(&["inspect", &input]);
    assert_eq!(code(&out), 0);
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["n"], 600);
    assert_eq!(summary["classes"], 6);
    assert_eq!(summary["labels"], true);
}

#[test]
fn cifar10_recipe_uses_its_alpha() {
    let dir = tempfile::tempdir().unwrap();
    let input = generate(dir.path(), "m.cpl", &[]);
    let out_dir = dir.path().display().to_string();
    assert_eq!(code(&cpbench(&["conformalize", &input, "--recipe", "cifar10", "--out", &out_dir])), 0);
    let report = read_json(&dir.path().join("report.json"));
    assert_eq!(report["record"]["alpha"], 0.05);
}
