use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> String {
    format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn construe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_construe"))
        .args(args)
        .env_remove("CONSTRUE_KB_PATH")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

fn worked_example(dir: &Path) -> (PathBuf, PathBuf) {
    let (report, trace) = (dir.join("report.json"), dir.join("trace.jsonl"));
    let o = construe(&[
        "interpret",
        "--kb",
        "ecg_waves",
        "--input",
        &fixture("worked_example.csv"),
        "--series",
        &fixture("worked_example_series.csv"),
        "--trace",
        trace.to_str().unwrap(),
        "--output",
        report.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    (report, trace)
}

#[test]
fn interprets_the_sinusoid() {
    let o = construe(&[
        "interpret",
        "--kb",
        "sinus",
        "--input",
        &fixture("sinus.csv"),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let r = json(&o);
    assert_eq!(r["covering_ratio"], 1.0);
    assert_eq!(r["hypotheses"][0]["values"]["alpha"], 20.0);
}

#[test]
fn interprets_the_cardiac_cycle() {
    let dir = tempfile::tempdir().unwrap();
    let (report, _) = worked_example(dir.path());
    let r: Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(r["covering_ratio"], 1.0);
    let kinds: Vec<&str> = r["hypotheses"]
        .as_array()
        .unwrap()
        .iter()
        .map(|h| h["observable"].as_str().unwrap())
        .collect();
    assert_eq!(kinds.iter().filter(|k| **k == "N").count(), 1);
    assert_eq!(kinds.iter().filter(|k| **k == "Tw").count(), 1);
    assert!(r["unintelligible"].as_array().unwrap().is_empty());
}

#[test]
fn malformed_kb_exits_2_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let kb = dir.path().join("bad.kb");
    std::fs::write(&kb, "observable x { process y }\n").unwrap();
    let o = construe(&[
        "interpret",
        "--kb",
        kb.to_str().unwrap(),
        "--input",
        &fixture("sinus.csv"),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.kb:1:"));
}

#[test]
fn unreadable_input_exits_1() {
    let o = construe(&["interpret", "--kb", "sinus", "--input", "/nonexistent.csv"]);
    assert_eq!(o.status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "id,observable\nx,p\n").unwrap();
    let o = construe(&[
        "interpret",
        "--kb",
        "sinus",
        "--input",
        bad.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn truncation_exits_3_and_still_reports() {
    let o = construe(&[
        "interpret",
        "--kb",
        "ecg_waves",
        "ecg_rhythms",
        "--input",
        &fixture("ignorance.csv"),
        "--max-nodes",
        "100",
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(json(&o)["truncated"], true);
}

#[test]
fn kb_path_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("mine.kb"), construe::ecg::SINUS_KB).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_construe"))
        .args([
            "interpret",
            "--kb",
            "mine.kb",
            "--input",
            &fixture("sinus.csv"),
        ])
        .env("CONSTRUE_KB_PATH", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn pattern_listing() {
    let count = |g: &str, n: &str| {
        let o = construe(&[
            "patterns",
            "--kb",
            "ecg_waves",
            "ecg_rhythms",
            "--grammar",
            g,
            "--max-findings",
            n,
        ]);
        assert!(o.status.success());
        let text = stdout(&o);
        let json_lines = text.lines().count();
        let o = construe(&[
            "patterns",
            "--kb",
            "ecg_waves",
            "ecg_rhythms",
            "--grammar",
            g,
            "--max-findings",
            n,
            "--pretty",
        ]);
        let pretty = stdout(&o)
            .lines()
            .filter(|l| l.starts_with("  ") && !l.starts_with("    "))
            .count();
        assert_eq!(json_lines, pretty);
        json_lines
    };
    assert_eq!(count("G_N", "6"), 1);
    assert_eq!(count("G_VB", "6"), 2);
    assert_eq!(count("G_VB", "0"), 0);
    let o = construe(&["patterns", "--kb", "ecg_waves", "--grammar", "G_none"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn explains_trace_nodes() {
    let dir = tempfile::tempdir().unwrap();
    let (report, trace) = worked_example(dir.path());
    let r: Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    let path: Vec<u64> = r["path"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    let nodes: Vec<Value> = std::fs::read_to_string(&trace)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap())
        .filter_map(|v| v.get("node").cloned())
        .collect();
    let mut cur = 0u64;
    for idx in path {
        cur = nodes
            .iter()
            .find(|n| n["parent"].as_u64() == Some(cur) && n["index"].as_u64() == Some(idx))
            .unwrap()["id"]
            .as_u64()
            .unwrap();
    }
    let t = trace.to_str().unwrap();
    let o = construe(&["explain", "--trace", t, "--node", &cur.to_string()]);
    let steps: Vec<Value> = stdout(&o)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let ops: Vec<&str> = steps
        .iter()
        .map(|s| s["step"]["op"].as_str().unwrap())
        .collect();
    assert_eq!(
        ops,
        [
            "ABDUCE", "DEDUCE", "SUBSUME", "DEDUCE", "PREDICT", "DEDUCE", "SUBSUME", "DEDUCE",
            "PREDICT"
        ]
    );
    let o = construe(&["explain", "--trace", t, "--node", "0"]);
    assert!(o.status.success() && stdout(&o).is_empty());
    let o = construe(&[
        "explain",
        "--trace",
        t,
        "--node",
        &cur.to_string(),
        "--pretty",
    ]);
    assert_eq!(
        stdout(&o).lines().filter(|l| l.contains("PREDICT")).count(),
        2
    );
    let o = construe(&[
        "explain",
        "--trace",
        t,
        "--node",
        &cur.to_string(),
        "--why-not",
        "--pretty",
    ]);
    assert!(stdout(&o).contains("alternatives:"));
    let o = construe(&["explain", "--trace", t, "--node", "100000"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn report_round_trips_through_the_validator() {
    let dir = tempfile::tempdir().unwrap();
    let (report, _) = worked_example(dir.path());
    let args = |r: &str| {
        construe(&[
            "validate",
            "--kb",
            "ecg_waves",
            "--input",
            &fixture("worked_example.csv"),
            "--series",
            &fixture("worked_example_series.csv"),
            "--report",
            r,
        ])
    };
    let o = args(report.to_str().unwrap());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let mut r: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    r["hypotheses"][0]["t_begin"] = serde_json::json!([0, 0]);
    let tampered = dir.path().join("tampered.json");
    std::fs::write(&tampered, r.to_string()).unwrap();
    assert_eq!(args(tampered.to_str().unwrap()).status.code(), Some(4));
}

#[test]
fn set_cover_sizes() {
    let o = construe(&["setcover", "--universe", "1", "--sets", "1"]);
    let v = json(&o);
    assert_eq!(
        (
            v["set_cover"].as_u64(),
            v["exclusive_cover"].as_u64(),
            v["construe"].as_u64()
        ),
        (Some(1), Some(1), Some(1))
    );
    let v = json(&construe(&["setcover", "--universe", "1,2", "--sets", ""]));
    assert!(v["set_cover"].is_null() && v["exclusive_cover"].is_null() && v["construe"].is_null());
    let o = construe(&["setcover", "--universe", "1,2", "--sets", "1;x"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn oracle_on_bigeminy() {
    let o = construe(&[
        "oracle",
        "--kb",
        "ecg_waves",
        "ecg_rhythms",
        "--input",
        &fixture("bigeminy.csv"),
    ]);
    assert!(o.status.success());
    assert_eq!(json(&o)["minimum_size"], 1);
}
