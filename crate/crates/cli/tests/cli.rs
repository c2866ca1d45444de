use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = "N = 4\nM = 8\nn_mcn = 8\nhidden = 8\nencoder_hidden = 8\nT = 2\nbatch = 2\nwarmup = 4\nsteps = 20\n";

fn mcsfqf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcsfqf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn tiny_config(dir: &Path) -> String {
    let path = dir.join("tiny.conf");
    std::fs::write(&path, TINY).unwrap();
    path.display().to_string()
}

fn train_tiny(dir: &Path) -> String {
    let out = dir.join("run");
    let o = mcsfqf(&["train", "--config", &tiny_config(dir), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    out.join("final.ckpt").display().to_string()
}

#[test]
fn unknown_key_is_a_usage_error() {
    let o = mcsfqf(&["train", "--set", "no_such_key=1", "--steps", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no_such_key"), "{}", stderr(&o));
}

#[test]
fn bad_value_is_a_usage_error() {
    let o = mcsfqf(&["train", "--set", "gamma=often", "--steps", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("gamma"), "{}", stderr(&o));
}

#[test]
fn missing_config_names_the_path() {
    let o = mcsfqf(&["train", "--config", "/nonexistent/run.conf"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/nonexistent/run.conf"), "{}", stderr(&o));
}

#[test]
fn unknown_verb_fails() {
    let o = mcsfqf(&["fly"]);
    assert!(!o.status.success());
}

#[test]
fn zero_steps_writes_a_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("zero");
    let o = mcsfqf(&[
        "train",
        "--config",
        &tiny_config(tmp.path()),
        "--steps",
        "0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let line: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(line["steps"], 0);
    assert!(out.join("final.ckpt").exists());
}

#[test]
fn eval_output_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let ck = train_tiny(tmp.path());
    let a = mcsfqf(&["eval", "--checkpoint", &ck, "--episodes", "3", "--seed", "5"]);
    let b = mcsfqf(&["eval", "--checkpoint", &ck, "--episodes", "3", "--seed", "5"]);
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_str(stdout(&a).trim()).unwrap();
    assert_eq!(v["episodes"], 3);
    assert_eq!(v["returns"].as_array().unwrap().len(), 3);
}

#[test]
fn inspect_writes_csv_per_state() {
    let tmp = tempfile::tempdir().unwrap();
    let ck = train_tiny(tmp.path());
    let dir = tmp.path().join("traces");
    let o = mcsfqf(&["inspect", "--checkpoint", &ck, "--state", "1", "--state", "3", "--out", dir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 2);
    let text = std::fs::read_to_string(dir.join("inspect-state3.csv")).unwrap();
    assert!(text.starts_with("t,neuron,v_b,v_a,u,spike\n"));
}

#[test]
fn corrupted_checkpoint_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let ck = train_tiny(tmp.path());
    let mut bytes = std::fs::read(&ck).unwrap();
    bytes[0] ^= 0xff;
    std::fs::write(&ck, bytes).unwrap();
    let o = mcsfqf(&["eval", "--checkpoint", &ck]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("magic"), "{}", stderr(&o));
}

#[test]
fn verify_reports_json_lines_and_catches_a_leak_fault() {
    let ok = mcsfqf(&["verify"]);
    let records: Vec<serde_json::Value> = stdout(&ok)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let names: Vec<&str> = records.iter().map(|r| r["check"].as_str().unwrap()).collect();
    assert!(names.contains(&"theorem1_closed_form") && names.contains(&"gradient_fd"), "{names:?}");
    assert!(records.iter().all(|r| r["passed"].is_boolean() && r["seconds"].is_number()));

    let bad = mcsfqf(&["verify", "--set", "fault_injection=leak_factor"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(stderr(&bad).contains("theorem1_closed_form"), "{}", stderr(&bad));
}
