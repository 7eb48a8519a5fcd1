use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn glmf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glmf"))
        .args(args)
        .env_remove("GLMF_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = glmf(args);
    assert!(out.status.success(), "glmf {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_league(dir: &Path) {
    ok(&[
        "synth-data", "--out", p(dir), "--batters", "30", "--pitchers", "25", "--short-batters", "3",
        "--short-pitchers", "3", "--observed", "220", "--seed", "5",
    ]);
}

fn same_files(a: &Path, b: &Path, names: &[&str]) {
    for name in names {
        let x = fs::read(a.join(name)).unwrap();
        let y = fs::read(b.join(name)).unwrap();
        assert!(x == y, "{name} differs between runs");
    }
}

const SIM_FILES: [&str; 5] = ["records.csv", "table_rmse.csv", "table_loglik.csv", "marginals.csv", "manifest.json"];
const CV_FILES: [&str; 5] = ["cv_table.csv", "cv_summary.csv", "cv_folds.csv", "cv_pairs.csv", "manifest.json"];

#[test]
fn simulate_is_deterministic_across_job_counts() {
    let tmp = TempDir::new().unwrap();
    let runs = [("a", "1"), ("b", "3"), ("c", "1")];
    for (name, jobs) in runs {
        let out = tmp.path().join(name);
        ok(&[
            "simulate", "--out", p(&out), "--sigma", "0.1,0.7", "--nmax", "2", "--rank", "1,2", "--reps", "2",
            "--dims", "20,15,6,5", "--seed", "11", "--jobs", jobs,
        ]);
    }
    same_files(&tmp.path().join("a"), &tmp.path().join("b"), &SIM_FILES);
    same_files(&tmp.path().join("a"), &tmp.path().join("c"), &SIM_FILES);
    let records = fs::read_to_string(tmp.path().join("a/records.csv")).unwrap();
    assert_eq!(records.lines().count(), 1 + 2 * 2 * 2 * 6);
}

#[test]
fn cv_is_deterministic_across_job_counts() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    small_league(&data);
    for (name, jobs) in [("a", "1"), ("b", "4")] {
        let out = tmp.path().join(name);
        ok(&["cv", "--data", p(&data), "--out", p(&out), "--folds", "3", "--ranks", "1,2", "--seed", "3", "--jobs", jobs]);
    }
    same_files(&tmp.path().join("a"), &tmp.path().join("b"), &CV_FILES);
    let table = fs::read_to_string(tmp.path().join("a/cv_table.csv")).unwrap();
    assert!(table.contains("Rank 1") && table.contains("Rank 2"));
}

#[test]
fn zero_rank_is_a_usage_error() {
    let out = glmf(&["impute", "--data", ".", "--rank", "0", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn off_grid_sigma_lists_the_valid_values() {
    let tmp = TempDir::new().unwrap();
    let out = glmf(&["simulate", "--out", p(tmp.path()), "--sigma", "0.2"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("0.1") && err.contains("0.7"), "{err}");
}

#[test]
fn missing_table_is_named() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    small_league(&data);
    fs::remove_file(data.join("pitching.csv")).unwrap();
    let out = glmf(&["impute", "--data", p(&data), "--method", "mean", "--out", p(&tmp.path().join("o"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("pitching.csv"));
}

#[test]
fn impute_and_report_top_matchups() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    small_league(&data);
    let out = tmp.path().join("imp");
    ok(&["impute", "--data", p(&data), "--method", "log5", "--out", p(&out)]);
    for name in ["p_hat.csv", "diagnostics.json", "manifest.json"] {
        assert!(out.join(name).exists(), "{name}");
    }
    let report = ok(&["report", "--input", p(&out), "--top", "4"]);
    let text = String::from_utf8(report.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "rank,batter,pitcher,p_hat");
    assert_eq!(lines.len(), 5);
    let values: Vec<f64> = lines[1..].iter().map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert!(values.windows(2).all(|w| w[0] >= w[1]));
    assert!(values.iter().all(|v| (0.001..=0.999).contains(v)));
}

#[test]
fn data_directory_falls_back_to_the_environment() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    small_league(&data);
    let out = tmp.path().join("imp");
    let status = Command::new(env!("CARGO_BIN_EXE_glmf"))
        .args(["impute", "--method", "mean", "--out", p(&out)])
        .env("GLMF_DATA_DIR", &data)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("p_hat.csv").exists());
}

#[test]
fn flags_override_config_values() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    small_league(&data);
    let config = tmp.path().join("run.toml");
    fs::write(&config, format!("seed = 99\ndata = {:?}\n[impute]\nmethod = \"mean\"\nrank = 2\n", p(&data))).unwrap();

    let from_file = tmp.path().join("f");
    ok(&["--config", p(&config), "impute", "--out", p(&from_file)]);
    let manifest = fs::read_to_string(from_file.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 99"));
    assert!(manifest.contains("\"method\": \"mean\""));

    let flagged = tmp.path().join("g");
    ok(&["--config", p(&config), "--seed", "7", "impute", "--method", "log5", "--out", p(&flagged)]);
    let manifest = fs::read_to_string(flagged.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 7"));
    assert!(manifest.contains("\"method\": \"log5\""));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = TempDir::new().unwrap();
    let config = tmp.path().join("bad.toml");
    fs::write(&config, "[impute]\ntolerence = 1e-3\n").unwrap();
    let out = glmf(&["--config", p(&config), "report", "--input", "x"]);
    assert!(!out.status.success());
}

#[test]
fn warm_start_from_fit_reproduces_a_cold_impute() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    small_league(&data);
    let fit = tmp.path().join("fit.json");
    ok(&["fit", "--data", p(&data), "--rank", "1", "--out", p(&fit)]);
    assert!(tmp.path().join("fit.manifest.json").exists());
    let warm = tmp.path().join("warm");
    let cold = tmp.path().join("cold");
    ok(&["impute", "--data", p(&data), "--rank", "1", "--warm-start", p(&fit), "--out", p(&warm)]);
    ok(&["impute", "--data", p(&data), "--rank", "1", "--out", p(&cold)]);
    same_files(&warm, &cold, &["p_hat.csv", "diagnostics.json"]);

    let mismatch = glmf(&["impute", "--data", p(&data), "--rank", "2", "--warm-start", p(&fit), "--out", p(&warm)]);
    assert!(!mismatch.status.success());
}
