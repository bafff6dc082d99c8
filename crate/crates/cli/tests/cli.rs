use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn gargoyle(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gargoyle")).current_dir(dir).args(args).output().expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn generate_run_compare_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("c.json"), r#"{"scenarios": 12}"#).unwrap();
    let out = gargoyle(d, &["generate", "--config", "c.json", "--seed", "3", "--out", "s.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&d.join("s.json")).as_array().unwrap().len(), 12);

    let out = gargoyle(d, &["run", "--scenarios", "s.json", "--out", "r.json", "--trace", "t.jsonl"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&d.join("r.json"));
    assert_eq!(report["scenarios"], 12);
    assert_eq!(report["model"], "gargoyle");
    let models: Vec<&str> = report["models"].as_array().unwrap().iter().map(|m| m["model"].as_str().unwrap()).collect();
    assert_eq!(models, ["gargoyle", "rbac", "fbac_static", "ucon_like"]);
    let trace = std::fs::read_to_string(d.join("t.jsonl")).unwrap();
    let first: Value = serde_json::from_str(trace.lines().next().unwrap()).unwrap();
    assert_eq!(first["scenario"], 0);
    assert_eq!(first["seq"], 0);

    let out = gargoyle(d, &["run", "--scenarios", "s.json", "--out", "b.json", "--baseline", "fbac"]);
    assert!(out.status.success());
    assert_eq!(json(&d.join("b.json"))["model"], "fbac_static");

    let out = gargoyle(d, &["compare", "--reports", "r.json", "b.json"]);
    assert!(out.status.success());
    let table = String::from_utf8(out.stdout).unwrap();
    assert_eq!(table.lines().count(), 1 + 4 + 1);
    assert!(table.contains("fbac_static"));
}

#[test]
fn same_seed_same_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("c.json"), r#"{"scenarios": 8}"#).unwrap();
    for name in ["a", "b"] {
        let s = format!("{name}.json");
        assert!(gargoyle(d, &["generate", "--config", "c.json", "--seed", "9", "--out", &s]).status.success());
        assert!(gargoyle(d, &["run", "--scenarios", &s, "--out", &format!("{name}-r.json")]).status.success());
    }
    assert_eq!(std::fs::read(d.join("a.json")).unwrap(), std::fs::read(d.join("b.json")).unwrap());
    assert_eq!(std::fs::read(d.join("a-r.json")).unwrap(), std::fs::read(d.join("b-r.json")).unwrap());
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.json"), r#"{"colour": 1}"#).unwrap();
    std::fs::write(d.join("zero.json"), r#"{"category_weights": [0, 0, 0, 0]}"#).unwrap();
    std::fs::write(d.join("broken.json"), "{").unwrap();
    let cases: [&[&str]; 5] = [
        &["generate", "--config", "bad.json", "--out", "x.json"],
        &["generate", "--config", "zero.json", "--out", "x.json"],
        &["run", "--scenarios", "missing.json", "--out", "r.json"],
        &["run", "--scenarios", "broken.json", "--out", "r.json"],
        &["bench", "--policies-max", "5"],
    ];
    for args in cases {
        assert_eq!(gargoyle(d, args).status.code(), Some(2), "{args:?}");
    }
    std::fs::write(d.join("s.json"), "[]").unwrap();
    let out = gargoyle(d, &["run", "--scenarios", "s.json", "--policies", "broken.json", "--out", "r.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn engine_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // The request is issued before its user ever attaches.
    let spec = serde_json::json!([{
        "id": 5, "category": "own_device", "map": 1,
        "provider": {"ip": "10.0.100.1", "fd_id": "P4", "port_id": 0},
        "requester": "UA",
        "users": [{"user": "UA", "role": "R3", "ip": "10.0.1.1"}],
        "steps": [{"op": "request", "time": 100, "request_id": "r", "user": "UA", "object": "F1"}],
        "horizon": 1000, "expected": "unaffected"
    }]);
    std::fs::write(d.join("s.json"), spec.to_string()).unwrap();
    let out = gargoyle(d, &["run", "--scenarios", "s.json", "--out", "r.json"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("scenario 5"));
}

#[test]
fn bench_prints_a_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let out = gargoyle(
        dir.path(),
        &["bench", "--policies-max", "200", "--users", "30", "--decisions", "20", "--out", "b.json"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = json(&dir.path().join("b.json"));
    assert_eq!(rows.as_array().unwrap().len(), 2);
    assert_eq!(rows[1]["policies"], 200);
}
