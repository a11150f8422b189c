use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_modlens");

/// Small models so the whole pipeline runs in seconds.
const SMALL: &[&str] = &[
    "--set", "split.validation=40",
    "--set", "split.test=40",
    "--set", "classifier.embedding.dim=8",
    "--set", "classifier.embedding.buckets=4096",
    "--set", "classifier.encoder.hidden=8",
    "--set", "classifier.encoder.layers=1",
    "--set", "joint.generator.hidden=4",
    "--set", "joint.generator.layers=1",
    "--set", "joint.classifier.hidden=4",
    "--set", "joint.classifier.layers=1",
    "--set", "joint.z_hidden=2",
    "--set", "joint.epochs=1",
];

fn modlens(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("MODLENS_SEED").output().unwrap()
}

fn small(args: &[&str]) -> Output {
    // Shared settings first so a test's own `--set` wins.
    let mut all: Vec<&str> = SMALL.to_vec();
    all.extend_from_slice(args);
    modlens(&all)
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, name: &str, comments: usize, seed: u64) -> PathBuf {
    let out = dir.join(name);
    let o = modlens(&["synth", "--out", p(&out), "--comments", &comments.to_string(), "--seed", &seed.to_string()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn version_is_json() {
    let o = modlens(&["--version"]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    assert_eq!(v["name"], "modlens");
    assert!(v["version"].is_string());
}

#[test]
fn config_dump_shows_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.toml");
    std::fs::write(&file, "[joint]\nepochs = 4\nlambda_sparsity = 0.002\n").unwrap();
    let o = Command::new(BIN)
        .args(["--config", p(&file), "--set", "joint.epochs=6", "--config-dump"])
        .env("MODLENS_JOINT__LAMBDA_COHERENCE", "0.005")
        .env("MODLENS_JOINT__LAMBDA_SPARSITY", "0.001")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["config"]["joint"]["epochs"], 6);
    assert_eq!(v["config"]["joint"]["lambda_sparsity"], 0.002);
    assert_eq!(v["config"]["joint"]["lambda_coherence"], 0.005);
    assert_eq!(v["provenance"]["joint.epochs"], "flag");
    assert_eq!(v["provenance"]["joint.lambda_sparsity"], "file");
    assert_eq!(v["provenance"]["joint.lambda_coherence"], "env");
    assert_eq!(v["provenance"]["joint.batch_size"], "default");
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &Path| {
        modlens(&["synth", "--comments", "2000", "--toxic", "10", "--seed", "7", "--out", p(out)])
    };
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    assert_eq!(code(&args(&a)), 0);
    assert_eq!(code(&args(&b)), 0);
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    assert_eq!(bytes.iter().filter(|&&c| c == b'\n').count(), 2000);
}

#[test]
fn usage_and_config_errors_exit_2() {
    assert_eq!(code(&modlens(&["frobnicate"])), 2);
    assert_eq!(code(&modlens(&["synth", "--out", "x", "--bogus"])), 2);
    assert_eq!(code(&modlens(&["--set", "joint.epochs"])), 2);
    assert_eq!(code(&modlens(&["--set", "joint.nope=1", "--config-dump"])), 2);
    assert_eq!(code(&modlens(&["--set", "joint.epochs=0", "--config-dump"])), 2);
    assert_eq!(code(&modlens(&[])), 2);
}

#[test]
fn missing_files_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), "c.jsonl", 200, 1);
    let o = modlens(&["train-classifier", "--corpus", "/nonexistent.jsonl", "--out", p(&dir.path().join("m"))]);
    assert_eq!(code(&o), 4);
    let o = modlens(&["train-rationale", "--corpus", p(&corpus), "--classifier", "/nonexistent.ckpt", "--out", "r"]);
    assert_eq!(code(&o), 4);
    let o = modlens(&["--config", "/nonexistent.toml", "--config-dump"]);
    assert_eq!(code(&o), 4);
}

#[test]
fn malformed_corpus_exits_5_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("bad.jsonl");
    std::fs::write(
        &corpus,
        "{\"id\":\"a\",\"text\":\"hi there\",\"label\":\"appropriate\"}\n{\"id\":\"b\",\"text\":\"oops\"}\n",
    )
    .unwrap();
    let o = modlens(&["train-classifier", "--corpus", p(&corpus), "--out", p(&dir.path().join("m"))]);
    assert_eq!(code(&o), 5);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.jsonl:2:"), "{err}");
}

fn trained_classifier(dir: &Path, corpus: &Path) -> PathBuf {
    let clf = dir.join("clf.ckpt");
    let o = small(&["train-classifier", "--corpus", p(corpus), "--out", p(&clf), "--epochs", "1", "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    clf
}

#[test]
fn pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let corpus = synth(d, "c.jsonl", 400, 3);
    let log = d.join("clf.log");
    let clf = d.join("clf.ckpt");
    let o = small(&["train-classifier", "--corpus", p(&corpus), "--out", p(&clf), "--epochs", "1", "--seed", "3", "--log", p(&log)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let first: Value = serde_json::from_str(std::fs::read_to_string(&log).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(first["record"], "run");
    assert_eq!(first["config"]["seed"], 3);

    let rat = d.join("rat.ckpt");
    let rlog = d.join("rat.log");
    let o = small(&["train-rationale", "--corpus", p(&corpus), "--classifier", p(&clf), "--out", p(&rat), "--log", p(&rlog)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_json(&o)["status"], "converged");
    let last: Value = serde_json::from_str(std::fs::read_to_string(&rlog).unwrap().lines().last().unwrap()).unwrap();
    assert_eq!(last["record"], "summary");

    let report = d.join("report");
    let o = modlens(&["evaluate", "--corpus", p(&corpus), "--classifier", p(&clf), "--rationale", &format!("joint={}", p(&rat)), "--out", p(&report)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let roc = std::fs::read_to_string(report.join("roc.csv")).unwrap();
    assert!(roc.lines().count() >= 3);
    let series = std::fs::read_to_string(report.join("series.csv")).unwrap();
    assert!(series.contains("rationale") && series.contains("saliency"), "{series}");
    let records: Vec<Value> = std::fs::read_to_string(report.join("report.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(records[0]["record"], "run");
    assert_eq!(records[1]["record"], "classification");

    let mut child = Command::new(BIN)
        .args(["highlight", "--classifier", p(&clf), "--rationale", p(&rat)])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(b"{\"id\":\"x\",\"text\":\"some words here\"}\nplain text line\n\n").unwrap();
    let o = child.wait_with_output().unwrap();
    assert_eq!(code(&o), 0);
    let lines: Vec<Value> = String::from_utf8(o.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["id"], "x");
    assert_eq!(lines[0]["tokens"].as_array().unwrap().len(), 3);
    assert_eq!(lines[1]["id"], 2);
    assert!(lines[1]["spans"].is_array());
}

#[test]
fn embedded_config_reproduces_the_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let corpus = synth(d, "c.jsonl", 300, 4);
    let clf = trained_classifier(d, &corpus);

    let (header, _) = modlens::checkpoint::read_checkpoint(&clf).unwrap();
    let embedded = d.join("embedded.json");
    std::fs::write(&embedded, serde_json::to_string(&header.run).unwrap()).unwrap();
    let again = d.join("again.ckpt");
    let o = modlens(&["--config", p(&embedded), "train-classifier", "--corpus", p(&corpus), "--out", p(&again)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(&clf).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn all_appropriate_corpus_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let corpus = synth(d, "c.jsonl", 300, 5);
    let clf = trained_classifier(d, &corpus);
    let benign = d.join("benign.jsonl");
    let lines: Vec<String> = std::fs::read_to_string(&corpus)
        .unwrap()
        .lines()
        .filter(|l| l.contains("\"label\":\"appropriate\""))
        .map(String::from)
        .collect();
    std::fs::write(&benign, lines.join("\n")).unwrap();
    let o = small(&["train-rationale", "--corpus", p(&benign), "--classifier", p(&clf), "--out", p(&d.join("r"))]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn degenerate_training_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let corpus = synth(d, "c.jsonl", 300, 6);
    let clf = trained_classifier(d, &corpus);
    let out = d.join("r.ckpt");
    let o = small(&[
        "train-rationale", "--corpus", p(&corpus), "--classifier", p(&clf), "--out", p(&out),
        "--set", "joint.pinned_selection_bias=60.0", "--set", "joint.max_restarts=1", "--set", "joint.epochs=3",
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_json(&o)["status"], "failed");
    assert!(!out.exists());
}

fn http(addr: &str, request: &str) -> (u16, Value) {
    let mut s = TcpStream::connect(addr).unwrap();
    s.write_all(request.as_bytes()).unwrap();
    let mut raw = String::new();
    s.read_to_string(&mut raw).unwrap();
    let status = raw.split_whitespace().nth(1).unwrap().parse().unwrap();
    let body = raw.split("\r\n\r\n").nth(1).unwrap_or("");
    (status, serde_json::from_str(body).unwrap_or(Value::Null))
}

#[test]
fn serve_answers_http_without_a_model() {
    let dir = tempfile::tempdir().unwrap();
    let mut child = Command::new(BIN)
        .args(["serve", "--listen", "127.0.0.1:0", "--data-dir", p(&dir.path().join("data"))])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").unwrap().to_string();

    let (status, v) = http(&addr, "GET /health HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n");
    assert_eq!(status, 200);
    assert_eq!(v["model_loaded"], false);
    let body = r#"{"id":"a","text":"hello"}"#;
    let req = format!(
        "POST /comments HTTP/1.1\r\nHost: x\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    assert_eq!(http(&addr, &req).0, 503);
    let (status, v) = http(&addr, "GET /queue HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n");
    assert_eq!(status, 200);
    assert_eq!(v, Value::Array(vec![]));
    child.kill().unwrap();
    child.wait().unwrap();
}
