//! The command-line tool: exit codes, outputs and manifest replay.

use std::fs;
use std::path::Path;
use std::process::Command;

fn mcurrent(args: &[&str], out: &Path) -> (i32, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_mcurrent"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap();
    (o.status.code().unwrap(), String::from_utf8_lossy(&o.stdout).into_owned())
}

#[test]
fn bt_points_json() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = mcurrent(&["bt", "--model", "wang-buzsaki"], dir.path());
    assert_eq!(code, 0);
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("points.json")).unwrap()).unwrap();
    let hit = doc["points"].as_array().unwrap().iter().any(|p| {
        (p["v"].as_f64().unwrap() + 59.698).abs() < 0.05
            && (p["i_app"].as_f64().unwrap() - 0.200).abs() < 1e-2
            && (p["g_m"].as_f64().unwrap() - 0.146).abs() < 2e-3
    });
    assert!(hit);
    let manifest = fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    assert!(manifest.contains("\"points.json\""));
}

#[test]
fn three_equilibria_below_the_fold() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = mcurrent(
        &["equilibria", "--model", "wang-buzsaki", "--gM", "0", "--Iapp", "0.1"],
        dir.path(),
    );
    assert_eq!(code, 0);
    let csv = fs::read_to_string(dir.path().join("equilibria.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn bad_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(mcurrent(&["bt", "--model", "does-not-exist"], dir.path()).0, 2);
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"capacitance": 1, "leak": {"g": 0.1, "E": -65}, "bogus": 1}"#).unwrap();
    assert_eq!(mcurrent(&["bt", "--config", cfg.to_str().unwrap()], dir.path()).0, 2);
    assert_eq!(mcurrent(&["sync", "--syn-preset", "ex9"], dir.path()).0, 2);
}

#[test]
fn missing_m_current_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("leak.json");
    fs::write(&cfg, r#"{"capacitance": 1, "leak": {"g": 0.1, "E": -65}}"#).unwrap();
    let (code, _) = mcurrent(&["bt", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code, 2);
    let (code, _) = mcurrent(&["equilibria", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code, 0);
}

#[test]
fn replay_reproduces_csv_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let (code, _) = mcurrent(&["branch", "--model", "stiefel", "--gM", "0.6", "--v-step", "0.5"], &first);
    assert_eq!(code, 0);
    let second = dir.path().join("second");
    let manifest = first.join("manifest.json");
    let (code, _) = mcurrent(&["replay", manifest.to_str().unwrap()], &second);
    assert_eq!(code, 0);
    let a = fs::read(first.join("branch.csv")).unwrap();
    let b = fs::read(second.join("branch.csv")).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    let row = text.lines().nth(1).unwrap();
    assert_eq!(row.split(',').next().unwrap(), "-1.2000000000000000e2");
}

#[test]
fn fast_validation_passes_the_branch_check() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout) = mcurrent(&["validate", "--only", "6"], dir.path());
    assert_eq!(code, 0, "{stdout}");
    assert!(stdout.contains("PASS criterion  6"));
}
