use std::fs;
use std::process::Command;

fn ntk_lens(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ntk-lens")).args(args).output().unwrap()
}

#[test]
fn successful_run_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = ntk_lens(&["diagnose", "--widths", "512", "--k", "2", "--seeds", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("stability_report.csv").exists());
    assert!(out.join("stability_manifest.json").exists());
}

#[test]
fn config_file_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "kind = \"diagnose\"\nseeds = [0, 1, 2]\n[diagnose]\nwidths = [512]\nk = 1\n").unwrap();
    let out = dir.path().join("run");
    let o = ntk_lens(&["diagnose", "--config", cfg.to_str().unwrap(), "--seeds", "7", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("stability_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seeds"], serde_json::json!([7]));
}

#[test]
fn failed_cells_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = ntk_lens(&["diagnose", "--widths", "8", "--seeds", "0", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(dir.path().join("stability_report.csv").exists());
}

#[test]
fn configuration_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "kind = \"diagnose\"\nbogus = 1\n").unwrap();
    let wrong_kind = dir.path().join("wrong.toml");
    fs::write(&wrong_kind, "kind = \"bandit\"\n").unwrap();
    let out = dir.path().join("never");
    let out = out.to_str().unwrap();
    for args in [
        vec!["diagnose", "--config", bad.to_str().unwrap(), "--out", out],
        vec!["diagnose", "--config", wrong_kind.to_str().unwrap(), "--out", out],
        vec!["diagnose", "--config", "/nonexistent/c.toml", "--out", out],
        vec!["diagnose", "--precision", "f32", "--out", out],
        vec!["diagnose", "--seeds", "1,1", "--out", out],
        vec!["bandit", "--schedule", "greedy", "--out", out],
        vec!["continual", "--widths", "0", "--out", out],
    ] {
        let o = ntk_lens(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
    }
    assert!(!dir.path().join("never").exists());
}

#[test]
fn usage_errors_are_reported() {
    let o = ntk_lens(&["train"]);
    assert_ne!(o.status.code(), Some(0));
    let o = ntk_lens(&["--version"]);
    assert_eq!(o.status.code(), Some(0));
}
