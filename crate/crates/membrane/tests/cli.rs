//! End-to-end checks of the command-line contract: subcommands, flags,
//! file formats, and the stable exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_membrane"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_example(dir: &Path, name: &str) -> PathBuf {
    let out = run(&["example", name]);
    assert_eq!(out.status.code(), Some(0));
    let path = dir.join(format!("{name}.mps"));
    std::fs::write(&path, &out.stdout).unwrap();
    path
}

#[test]
fn validate_ok_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let pc2 = write_example(dir.path(), "pc2");
    assert_eq!(run(&["validate", pc2.to_str().unwrap()]).status.code(), Some(0));

    // Duplicate label in mu → exit 1 with a diagnostic on stderr.
    let bad = dir.path().join("bad.mps");
    std::fs::write(&bad, "model transition\nalphabet a\nmu [1[2][2]]\n").unwrap();
    let out = run(&["validate", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("duplicate label"));

    // Missing file → exit 2.
    let out = run(&["validate", dir.path().join("nope.mps").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot read"));
}

#[test]
fn run_even_k4_answers_yes_in_two_steps() {
    let dir = tempfile::tempdir().unwrap();
    let even = write_example(dir.path(), "even_k4");
    let out = run(&["run", even.to_str().unwrap(), "--seed", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("answer: yes"), "{text}");
    assert!(text.contains("steps: 2"), "{text}");
}

#[test]
fn run_exit_codes_budget_and_trace_flag() {
    let dir = tempfile::tempdir().unwrap();
    let pc2 = write_example(dir.path(), "pc2");
    let out = run(&["run", pc2.to_str().unwrap(), "--max-steps", "0"]);
    assert_eq!(out.status.code(), Some(3));

    let trace = dir.path().join("trace.jsonl");
    let out = run(&[
        "run",
        pc2.to_str().unwrap(),
        "--seed",
        "7",
        "--max-steps",
        "20",
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let lines: Vec<String> =
        std::fs::read_to_string(&trace).unwrap().lines().map(String::from).collect();
    assert!(lines.len() >= 2);
    // Every line is valid JSON; the last is the result record.
    for line in &lines {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }
    let last: serde_json::Value = serde_json::from_str(lines.last().unwrap()).unwrap();
    assert_eq!(last["status"], "halted");
}

#[test]
fn run_worker_flag_and_env_var_do_not_change_traces() {
    let dir = tempfile::tempdir().unwrap();
    let pc2 = write_example(dir.path(), "pc2");
    let mut traces = Vec::new();
    for workers in ["1", "8"] {
        let trace = dir.path().join(format!("t{workers}.jsonl"));
        let out = run(&[
            "run",
            pc2.to_str().unwrap(),
            "--seed",
            "7",
            "--max-steps",
            "20",
            "--workers",
            workers,
            "--trace",
            trace.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
        traces.push(std::fs::read(&trace).unwrap());
    }
    // Same run with MEMBRANE_WORKERS instead of the flag.
    let trace = dir.path().join("tenv.jsonl");
    let out = bin()
        .args([
            "run",
            pc2.to_str().unwrap(),
            "--seed",
            "7",
            "--max-steps",
            "20",
            "--trace",
            trace.to_str().unwrap(),
        ])
        .env("MEMBRANE_WORKERS", "4")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    traces.push(std::fs::read(&trace).unwrap());
    assert!(traces.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn explore_reports_truncation_with_exit_five() {
    let dir = tempfile::tempdir().unwrap();
    let pc2 = write_example(dir.path(), "pc2");
    let out = run(&["explore", pc2.to_str().unwrap(), "--depth", "2"]);
    assert_eq!(out.status.code(), Some(5));
    assert!(stdout(&out).contains("truncated"));

    // Depth 0: the root alone, never truncated.
    let out = run(&["explore", pc2.to_str().unwrap(), "--depth", "0"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("nodes: 1"));
    let even = write_example(dir.path(), "even_k4");
    let out = run(&["explore", even.to_str().unwrap(), "--depth", "4"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("answer: yes"));
}

#[test]
fn oracle_audit_passes_on_bundled_systems() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["pc2", "sync", "even_k6"] {
        let path = write_example(dir.path(), name);
        let out = run(&["oracle", path.to_str().unwrap(), "--steps", "3", "--trials", "50"]);
        assert_eq!(out.status.code(), Some(0), "{name}");
    }
}

#[test]
fn example_unknown_name_lists_available() {
    let out = run(&["example", "nosuch"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(err.contains("pc2") && err.contains("doubling"), "{err}");
}

#[test]
fn example_outputs_reparse_and_revalidate() {
    for name in ["pc2", "sync", "doubling", "even_k0", "even_k50"] {
        let out = run(&["example", name]);
        assert_eq!(out.status.code(), Some(0));
        let spec = membrane::parser::parse(&stdout(&out)).unwrap();
        assert!(membrane::model::validate_spec(&spec).is_empty(), "{name}");
    }
}

#[test]
fn tissue_runs_groups_writes_log_and_rejects_bad_fault_plans() {
    let dir = tempfile::tempdir().unwrap();
    let pc2 = write_example(dir.path(), "pc2");
    let log = dir.path().join("events.jsonl");
    let out = run(&[
        "tissue",
        pc2.to_str().unwrap(),
        "--instances",
        "3",
        "--seeds",
        "1,2,3",
        "--max-steps",
        "50",
        "--log",
        log.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let lines: Vec<String> =
        std::fs::read_to_string(&log).unwrap().lines().map(String::from).collect();
    // The three `started` events come first, in creation order.
    for (i, line) in lines.iter().take(3).enumerate() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["kind"], "started");
        assert_eq!(v["seq"], i as u64);
    }
    assert_eq!(stdout(&out).lines().count(), 3);

    // Fault plan naming an unknown instance → exit 1.
    let plan = dir.path().join("plan.json");
    std::fs::write(&plan, r#"[{"instance":"ghost","at":3}]"#).unwrap();
    let out = run(&[
        "tissue",
        pc2.to_str().unwrap(),
        "--faults",
        plan.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));

    // A real fault produces failed-then-reproduced events.
    std::fs::write(&plan, r#"[{"instance":"pc2-0","at":3}]"#).unwrap();
    let out = run(&[
        "tissue",
        pc2.to_str().unwrap(),
        "--faults",
        plan.to_str().unwrap(),
        "--max-steps",
        "30",
        "--log",
        log.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&log).unwrap();
    let failed = text.find(r#""kind":"failed""#).unwrap();
    let reproduced = text.find(r#""kind":"reproduced""#).unwrap();
    assert!(failed < reproduced);

    // Zero instances → empty log, exit 0.
    let out = run(&["tissue", "--log", log.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(&log).unwrap(), "");
}
