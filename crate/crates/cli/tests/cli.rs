use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn rlfd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rlfd")).args(args).output().unwrap()
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn protocol_writes_tables_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = config("training_worked.toml");
    let o = rlfd(&["--config", cfg.to_str().unwrap(), "protocol", "--seed", "3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let phases = std::fs::read_to_string(out.join("phases.csv")).unwrap();
    assert_eq!(phases.lines().count(), 10);
    assert!(phases.starts_with("seed,group,subject,phase,skill,status,ade,risk,armse,atc"));
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["seed"], 3);
    assert_eq!(summary["phases"].as_array().unwrap().len(), 9);

    let again = dir.path().join("again");
    let session = out.join("session.jsonl");
    let o = rlfd(&["replay", session.to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read_json(&again.join("summary.json")), summary);
    assert_eq!(std::fs::read_to_string(again.join("phases.csv")).unwrap(), phases);
}

#[test]
fn oracle_config_teaches_perfectly() {
    let cfg = config("oracle.toml");
    let o = rlfd(&["--config", cfg.to_str().unwrap(), "protocol", "--group", "control", "--seed", "8"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["group"], "control");
    for p in summary["phases"].as_array().unwrap() {
        assert_eq!(p["ade"], 0.0);
    }
    let p9 = &summary["phases"][8]["learning"];
    assert_eq!(p9["status"], "learned");
    assert!(p9["metrics"]["armse"].as_f64().unwrap() < 1e-6);
}

#[test]
fn cohort_table_has_two_rows_per_phase_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cohort");
    let o = rlfd(&["cohort", "--per-group", "1", "--seeds", "4,9", "--metric-starts", "10", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = std::fs::read_to_string(out.join("cohort.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 2 * 9 * 2);
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["seeds"], serde_json::json!([4, 9]));
    let groups = summary["groups"].as_array().unwrap();
    assert_eq!(groups.len(), 2);
    assert!(groups.iter().all(|g| g["subjects"] == 2 && g["phases"].as_array().unwrap().len() == 9));
}

#[test]
fn compare_supervised_emits_both_curves() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cmp");
    let o = rlfd(&["compare-supervised", "--seed", "1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let curves = std::fs::read_to_string(out.join("curves.csv")).unwrap();
    let mut lines = curves.lines();
    assert_eq!(lines.next(), Some("skill,horizon,armse_rlfd,armse_supervised"));
    assert_eq!(lines.count(), 800);
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["skills"].as_array().unwrap().len(), 2);
}

#[test]
fn curriculum_prints_five_phases() {
    let o = rlfd(&["curriculum", "--seed", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let c: Value = serde_json::from_slice(&o.stdout).unwrap();
    let phases = c["phases"].as_array().unwrap();
    assert_eq!(phases.len(), 5);
    assert_eq!(phases[0]["phase"], "P3");
    assert!(phases.iter().all(|p| p["keyframes"]["keyframes"].as_array().unwrap().len() == 8));
    assert_eq!(c["slider"]["min"], -100.0);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "group = \"guided\"\nunknown_key = 1\n").unwrap();
    assert_eq!(rlfd(&["--config", bad.to_str().unwrap(), "protocol"]).status.code(), Some(2));
    let missing = dir.path().join("missing.toml");
    assert_eq!(rlfd(&["--config", missing.to_str().unwrap(), "protocol"]).status.code(), Some(2));
    assert_eq!(rlfd(&["cohort", "--seeds", "x"]).status.code(), Some(2));
    assert_eq!(rlfd(&["protocol", "--horizon", "0"]).status.code(), Some(2));
    assert_eq!(rlfd(&["protocol", "--group", "nobody"]).status.code(), Some(2));

    let impossible = dir.path().join("impossible.toml");
    std::fs::write(&impossible, "group = \"guided\"\n[settings.sampling]\ncond_max = 1.5\nmax_attempts = 3\n").unwrap();
    let o = rlfd(&["--config", impossible.to_str().unwrap(), "protocol"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("numerical"));

    let run = dir.path().join("run");
    assert!(rlfd(&["protocol", "--out", run.to_str().unwrap()]).status.success());
    let log = run.join("session.jsonl");
    let text = std::fs::read_to_string(&log).unwrap();
    let tampered = text.replacen("\"index\":0,\"reward\":", "\"index\":0,\"reward\":-1e-3,\"was\":", 1);
    std::fs::write(&log, tampered).unwrap();
    assert_eq!(rlfd(&["replay", log.to_str().unwrap()]).status.code(), Some(2));
}
