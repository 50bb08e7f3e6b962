use std::path::PathBuf;
use std::process::{Command, Output};

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lab")).args(args).output().expect("spawn lab")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("otbound-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

#[test]
fn list_families_succeeds() {
    let out = lab(&["list-families"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("translation") && text.contains("layer-split"));
}

#[test]
fn missing_family_is_a_config_error() {
    assert_eq!(lab(&["run"]).status.code(), Some(2));
}

#[test]
fn malformed_config_is_a_config_error() {
    let dir = scratch("badcfg");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("cfg.json");
    std::fs::write(&path, r#"{"schema_version": 1, "family": "identity", "bogus": 3}"#).unwrap();
    assert_eq!(lab(&["run", "--config", path.to_str().unwrap()]).status.code(), Some(2));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn unknown_criterion_is_rejected() {
    assert_eq!(lab(&["accept", "99"]).status.code(), Some(2));
    assert_eq!(lab(&["accept", "x"]).status.code(), Some(2));
}

#[test]
fn run_writes_artifacts_and_plot_reads_them() {
    let dir = scratch("run");
    let out = lab(&["run", "--family", "translation", "--n", "16", "--threads", "1", "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = dir.join("aggregate.csv");
    assert!(csv.exists());
    assert!(dir.join("fits.csv").exists());
    assert!(dir.join("instances").read_dir().unwrap().next().is_some());
    let plot = lab(&["plot", csv.to_str().unwrap(), "--column", "e"]);
    assert_eq!(plot.status.code(), Some(0), "{}", String::from_utf8_lossy(&plot.stderr));
    assert!(dir.join("aggregate-e.svg").exists());
    let missing = lab(&["plot", csv.to_str().unwrap(), "--column", "nope"]);
    assert_ne!(missing.status.code(), Some(0));
    let _ = std::fs::remove_dir_all(&dir);
}
