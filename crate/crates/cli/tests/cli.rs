use std::path::Path;
use std::process::Command;

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_reachflow");

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn drift(value: &str, extra: &str) -> String {
    format!(
        r#"{{
  "field": {{"name": "constant", "params": {{"value": {value}}}, "dimension": 2}},
  "grid": {{"min": [-1.0, -1.0], "max": [1.0, 1.0], "resolution": [64, 64]}},
  "solver": {{"horizon": 4.0}},
  "source": [0.0, 0.0],
  "seed": 11{extra}
}}"#
    )
}

fn run(dir: &Path, args: &[&str]) -> (i32, String) {
    let out = Command::new(BIN).args(args).current_dir(dir).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into_owned())
}

#[test]
fn travel_time_in_still_water() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "zero.json", &drift("[0.0, 0.0]", ""));
    let (code, out) = run(
        dir.path(),
        &["--json", "travel-time", cfg.to_str().unwrap(), "--from", "0,0", "--to", "-0.5,0.5"],
    );
    assert_eq!(code, 0);
    let r: Value = serde_json::from_str(&out).unwrap();
    let exact = 0.5f64.hypot(0.5);
    let h = 2.0 / 64.0;
    for key in ["level_set", "oracle"] {
        let t = r[key].as_f64().unwrap();
        assert!((t - exact).abs() <= 3.0 * h, "{key}: {t}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let strong = write_config(d, "strong.json", &drift("[2.0, 0.0]", r#", "verify": {"region": {"lower": [0.0, null]}}"#));
    assert_eq!(run(d, &["verify", "trap", strong.to_str().unwrap()]).0, 0);

    // The region is wrong side of the source, so the check must fail.
    let leaky = write_config(d, "leaky.json", &drift("[2.0, 0.0]", r#", "verify": {"region": {"upper": [0.0, null]}}"#));
    assert_eq!(run(d, &["verify", "trap", leaky.to_str().unwrap()]).0, 1);

    let malformed = write_config(d, "bad.json", &drift("[2.0, \"x\"]", ""));
    assert_eq!(run(d, &["solve", malformed.to_str().unwrap()]).0, 2);
    assert_eq!(run(d, &["verify", "lemma24", strong.to_str().unwrap()]).0, 2);
    assert_eq!(run(d, &["solve", "missing.json"]).0, 2);
    assert_eq!(run(d, &["frobnicate"]).0, 2);

    // Targets off the grid are config errors; unreachable ones are solver errors.
    let s = strong.to_str().unwrap();
    assert_eq!(run(d, &["trajectory", s, "--to", "3,0"]).0, 2);
    assert_eq!(run(d, &["trajectory", s, "--to", "-0.6,0"]).0, 3);
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.json", &drift("[0.0, 0.0]", "").replace("4.0", "-1.0"));
    let out = Command::new(BIN).args(["solve", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("solver.horizon"));
}

#[test]
fn solve_and_oracle_write_grid_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(d, "drift.json", &drift("[0.5, 0.0]", ""));
    let c = cfg.to_str().unwrap();
    assert_eq!(run(d, &["solve", c, "--out", "ls.grid"]).0, 0);
    assert_eq!(run(d, &["oracle", c, "--out", "dj.grid"]).0, 0);
    let ls = reachflow::io::read_grid(&d.join("ls.grid")).unwrap();
    let dj = reachflow::io::read_grid(&d.join("dj.grid")).unwrap();
    assert_eq!(ls.grid(), dj.grid());
    let t = ls.at(&[0.5, 0.0]).unwrap();
    assert!((t - 1.0 / 3.0).abs() < 0.05, "{t}");
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cell.json", r#"{
  "field": {"name": "cellular", "params": {"amplitude": 3.0}, "dimension": 2},
  "grid": {"min": [0.0, 0.0], "max": [2.0, 2.0], "resolution": [96, 96]},
  "solver": {"horizon": 20.0},
  "source": [1.0, 0.5],
  "seed": 3
}"#);
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let sub = dir.path().join(threads);
        std::fs::create_dir(&sub).unwrap();
        let args = ["--threads", threads, "--report", "report.json", "solve", cfg.to_str().unwrap()];
        assert_eq!(run(&sub, &args).0, 0);
        outputs.push((
            std::fs::read(sub.join("arrival.grid")).unwrap(),
            std::fs::read(sub.join("report.json")).unwrap(),
        ));
    }
    assert!(outputs[0] == outputs[1]);
}

#[test]
fn trajectory_csv_reaches_the_target() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(d, "drift.json", &drift("[0.5, 0.0]", ""));
    let (code, out) = run(d, &["--json", "trajectory", cfg.to_str().unwrap(), "--to", "0.4,0.3"]);
    assert_eq!(code, 0);
    let r: Value = serde_json::from_str(&out).unwrap();
    assert!(r["summary"]["replay_error"].as_f64().unwrap() <= 2.0 * 2.0 / 64.0);
    let csv = std::fs::read_to_string(d.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,x1,x2,a1,a2\n"));
}

#[test]
fn theorem2_records_then_reproduces_a_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(d, "drift.json", &drift("[0.5, 0.0]", r#", "verify": {"pairs": 40}"#));
    let args = ["--json", "verify", "theorem2", cfg.to_str().unwrap(), "--baseline", "base.json"];
    let (code, first) = run(d, &args);
    assert_eq!(code, 0);
    let first: Value = serde_json::from_str(&first).unwrap();
    assert_eq!(first["details"]["baseline"]["written"], true);
    let (code, second) = run(d, &args);
    assert_eq!(code, 0);
    let second: Value = serde_json::from_str(&second).unwrap();
    assert_eq!(second["details"]["baseline"]["written"], false);
    assert_eq!(first["details"]["fit"], second["details"]["fit"]);

    // A tampered baseline is no longer reproduced.
    let mut b: Value = serde_json::from_slice(&std::fs::read(d.join("base.json")).unwrap()).unwrap();
    b["c1"] = Value::from(b["c1"].as_f64().unwrap() * 1.1);
    std::fs::write(d.join("base.json"), b.to_string()).unwrap();
    assert_eq!(run(d, &args).0, 1);
}
