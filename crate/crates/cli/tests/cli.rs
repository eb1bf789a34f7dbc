use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_urbansim"))
}

fn scenarios() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

const SMALL: &str = r#"{
  "nodes": {"count": 3, "placement": {"explicit": [[0, 0], [100, 0], [200, 0]]}},
  "traffic": [{"src": 0, "dst": 2, "rate": 8192, "start": 1, "stop": 4}],
  "duration_s": 5
}"#;

#[test]
fn run_writes_summary_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "s.json", SMALL);
    let out = dir.path().join("out");
    let o = run(&["run", &sc, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("delivery_ratio"));
    let summary: String = fs::read_to_string(out.join("summary.json")).unwrap();
    assert!(summary.contains("\"schema_version\": 1"));
    assert!(summary.contains("\"config\""));
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("time_s,node,event_type,packet_id,flow_id,detail\n"));
}

#[test]
fn quiet_and_trace_off() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "s.json", SMALL);
    let out = dir.path().join("out");
    let o = run(&["run", &sc, "--out", out.to_str().unwrap(), "--trace", "off", "--quiet"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    assert!(out.join("summary.json").exists());
    assert!(!out.join("trace.csv").exists());
}

#[test]
fn identical_runs_produce_identical_traces() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenarios().join("diamond.json");
    let sc = sc.to_str().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        assert_eq!(run(&["run", sc, "--out", d.to_str().unwrap(), "--quiet"]).status.code(), Some(0));
    }
    assert_eq!(fs::read(a.join("trace.csv")).unwrap(), fs::read(b.join("trace.csv")).unwrap());
    assert_eq!(fs::read(a.join("summary.json")).unwrap(), fs::read(b.join("summary.json")).unwrap());
}

#[test]
fn seed_and_duration_overrides_reach_the_summary() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "s.json", SMALL);
    let out = dir.path().join("out");
    let o = run(&["run", &sc, "--out", out.to_str().unwrap(), "--seed", "99", "--duration", "3", "--quiet"]);
    assert_eq!(o.status.code(), Some(0));
    let summary = fs::read_to_string(out.join("summary.json")).unwrap();
    assert!(summary.contains("\"seed\": 99"));
    assert!(summary.contains("\"duration_s\": 3.0"));
}

#[test]
fn missing_scenario_exits_3() {
    let o = run(&["run", "/nonexistent/scenario.json", "--out", "/tmp/unused"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn malformed_json_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "bad.json", "{\"nodes\": {\"count\": 3,}");
    assert_eq!(run(&["run", &sc, "--out", "/tmp/unused"]).status.code(), Some(2));
}

#[test]
fn unknown_key_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "k.json", r#"{"nodes": {"count": 3}, "mobility": {"spee": 3}, "duration_s": 5}"#);
    let o = run(&["run", &sc, "--out", "/tmp/unused"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("spee"));
}

#[test]
fn invalid_value_exits_4_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let body = "{\n  \"nodes\": {\"count\": 3},\n  \"duration_s\": 5,\n  \"qos\": {\n    \"eta\": 1.5\n  }\n}";
    let sc = write(dir.path(), "v.json", body);
    let o = run(&["run", &sc, "--out", "/tmp/unused"]);
    assert_eq!(o.status.code(), Some(4));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 5") && err.contains("eta"), "{err}");
}

#[test]
fn unwritable_out_dir_exits_3_without_summary() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "s.json", SMALL);
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = blocker.join("out");
    let o = run(&["run", &sc, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!out.join("summary.json").exists());
}

#[test]
fn bad_flag_exits_2() {
    assert_eq!(run(&["run"]).status.code(), Some(2));
    assert_eq!(run(&["run", "x.json", "--out", "o", "--trace", "maybe"]).status.code(), Some(2));
}

#[test]
fn check_subcommand_validates_only() {
    let ok = scenarios().join("reference.json");
    assert_eq!(run(&["check", ok.to_str().unwrap()]).status.code(), Some(0));
}

#[test]
fn sweep_runs_each_seed_in_its_own_directory() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "s.json", SMALL);
    let out = dir.path().join("sweep");
    let o = run(&["sweep", &sc, "--out", out.to_str().unwrap(), "--seeds", "3..6"]);
    assert_eq!(o.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().count(), 5);
    for s in 3..=6 {
        assert!(out.join(format!("seed-{s}")).join("summary.json").exists());
    }
    assert_eq!(run(&["sweep", &sc, "--out", "x", "--seeds", "a,b"]).status.code(), Some(2));
}
