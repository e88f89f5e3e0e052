use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fafl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fafl")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("cfg.toml");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL: &str = r#"
users = 4
realizations = 2
methods = ["pdd_fa", "select_all", "mrt"]

[train]
rounds = 3

[dataset]
samples_per_user = 20
test_samples = 50
"#;

#[test]
fn validate_fills_defaults_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "users = 6\n");
    let out = fafl(&["validate", "--config", &cfg]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("users = 6"));
    assert!(text.contains("[pdd]"));
    let again = write_config(dir.path(), &text);
    assert_eq!(stdout(&fafl(&["validate", "--config", &again])), text);
}

#[test]
fn shipped_config_validates() {
    let cfg = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/desk.toml");
    assert!(fafl(&["validate", "--config", cfg]).status.success());
}

#[test]
fn unknown_key_and_bad_value_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for body in ["usres = 4\n", "users = 0\n", "[train]\nrounds = 0\n"] {
        let cfg = write_config(dir.path(), body);
        let out = fafl(&["validate", "--config", &cfg]);
        assert!(!out.status.success(), "accepted {body:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn missing_config_fails() {
    assert!(!fafl(&["validate", "--config", "/nonexistent/cfg.toml"]).status.success());
}

#[test]
fn run_writes_result_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("out");
    let out = fafl(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap(), "--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    for m in ["pdd_fa", "select_all", "mrt"] {
        assert!(text.contains(m));
    }
    let csv = fs::read_to_string(out_dir.join("results.csv")).unwrap();
    // header plus methods × realizations × rounds
    assert_eq!(csv.lines().count(), 1 + 3 * 2 * 3);
    assert!(out_dir.join("summary.json").exists());
    assert!(out_dir.join("pdd_traces.jsonl").exists());
}

#[test]
fn run_without_output_dir_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    assert!(!fafl(&["run", "--config", &cfg]).status.success());
    assert!(!fafl(&["run", "--config", &cfg, "--out", "x", "--workers", "0"]).status.success());
}

#[test]
fn oracle_suite_passes() {
    let out = fafl(&["oracle-suite", "--seed", "1"]);
    let text = stdout(&out);
    assert!(out.status.success(), "{text}");
    assert!(text.lines().last().unwrap().ends_with("checks passed"));
    assert!(!text.contains("FAIL"));
}
