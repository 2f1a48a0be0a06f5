use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cesplit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cesplit")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn empty_input_splits_trivially() {
    let out = cesplit(&["split", "friedberg", "--index", "3", "--stages", "0"]);
    assert_eq!(code(&out), 0);
    let r = report(&out);
    assert_eq!(r["split"]["overlaps"].as_array().unwrap().len(), 0);
}

#[test]
fn diagonalize_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let trace = p(dir.path(), "t{}.jsonl");
    let out = cesplit(&["diagonalize", "--proc", "hf", "--proc", "broken", "--stages", "1500", "--depth", "9", "--trace", &trace]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["thf.jsonl", "tbroken.jsonl"] {
        for suite in ["replay", "tree"] {
            let v = cesplit(&["verify", "--trace", &p(dir.path(), name), "--suite", suite]);
            assert_eq!(code(&v), 0, "{name} {suite}: {}", String::from_utf8_lossy(&v.stdout));
        }
    }
}

#[test]
fn tampered_trace_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let trace = p(dir.path(), "f.jsonl");
    assert_eq!(code(&cesplit(&["split", "friedberg", "--index", "2", "--stages", "2000", "--trace", &trace])), 0);
    let text = std::fs::read_to_string(&trace).unwrap();
    let flipped = text.replacen("\"side\":0", "\"side\":1", 1);
    assert_ne!(text, flipped);
    let bad = p(dir.path(), "bad.jsonl");
    std::fs::write(&bad, flipped).unwrap();
    assert_eq!(code(&cesplit(&["verify", "--trace", &bad, "--suite", "replay"])), 1);
    std::fs::write(&bad, "not json\n").unwrap();
    assert_eq!(code(&cesplit(&["verify", "--trace", &bad, "--suite", "replay"])), 1);
}

#[test]
fn identical_runs_give_identical_traces() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (p(dir.path(), "a.jsonl"), p(dir.path(), "b.jsonl"));
    for t in [&a, &b] {
        assert_eq!(code(&cesplit(&["split", "hk", "--index", "2", "--a-index", "4", "--stages", "3000", "--trace", t])), 0);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&cesplit(&["bogus"])), 2);
    assert_eq!(code(&cesplit(&["split", "friedberg", "--index", "x"])), 2);
    assert_eq!(code(&cesplit(&["verify", "--trace", "/nonexistent/trace.jsonl"])), 2);
}
