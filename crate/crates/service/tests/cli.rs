use std::io::Write;
use std::process::{Command, Output, Stdio};

use linkground::kb::fixture_key;
use linkground_testkit::fixture::{write_fixture, STRENGTH_URL};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_linkground"))
}

fn with_stdin(args: &[&str], input: &str) -> Output {
    let mut child = bin().args(args).stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::piped()).spawn().unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

#[test]
fn exit_codes() {
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
    assert_eq!(bin().arg("--version").output().unwrap().status.code(), Some(0));
    assert_eq!(bin().arg("nope").output().unwrap().status.code(), Some(1));
    assert_eq!(bin().args(["export", "--mode", "b+z", "--conversations", "x", "--out", "y"]).output().unwrap().status.code(), Some(1));
    let missing = bin().args(["ingest", "--dump", "/nonexistent/RC_2018-10.ndjson", "--out", "/tmp/never"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("error:"));
}

#[test]
fn tokenize_round_trip_over_stdin() {
    let text = "héllo __eot__ wörld 🙂";
    let enc = with_stdin(&["tokenize", "encode"], text);
    assert!(enc.status.success());
    let ids: Vec<u32> = serde_json::from_slice(&enc.stdout).unwrap();
    assert!(ids.contains(&linkground::tokenizer::Tokenizer::byte_level().specials().eot));
    let dec = with_stdin(&["tokenize", "decode"], &String::from_utf8(enc.stdout).unwrap());
    assert_eq!(String::from_utf8(dec.stdout).unwrap(), text);
}

#[test]
fn pipeline_modes_and_assemble() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let fx = write_fixture(root, fixture_key).unwrap();
    let p = |s: &str| root.join(s).to_str().unwrap().to_string();
    let run = |args: &[&str]| -> Value {
        let out = bin().args(args).output().unwrap();
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        serde_json::from_slice(&out.stdout).unwrap()
    };
    run(&["ingest", "--dump", fx.dump.to_str().unwrap(), "--out", &p("data")]);
    run(&["build-kb", "--urls", &p("data/urls.txt"), "--out", &p("kb"), "--fixtures", fx.docs_dir.to_str().unwrap()]);

    let base = run(&["export", "--conversations", &p("data/conversations.jsonl"), "--mode", "b", "--out", &p("b.jsonl")]);
    let full = run(&[
        "export",
        "--conversations",
        &p("data/conversations.jsonl"),
        "--mode",
        "b+k+h",
        "--kb",
        &p("kb"),
        "--store",
        &p("data/past_dialogues.json"),
        "--out",
        &p("bkh.jsonl"),
        "--references-out",
        &p("refs.jsonl"),
    ]);
    assert_eq!(base["exported"], full["exported"]);
    let b = std::fs::read_to_string(p("b.jsonl")).unwrap();
    assert!(!b.contains("\"K\"") && !b.contains("\"H\""));
    let bkh = std::fs::read_to_string(p("bkh.jsonl")).unwrap();
    assert!(bkh.contains("\"K\"") && bkh.contains("\"H\""));

    let needs_kb = bin().args(["export", "--conversations", &p("data/conversations.jsonl"), "--mode", "b+k", "--out", &p("x")]).output().unwrap();
    assert_eq!(needs_kb.status.code(), Some(2));

    run(&["train-lm", "--examples", &p("bkh.jsonl"), "--out", &p("lm.json")]);
    run(&["generate", "--lm", &p("lm.json"), "--examples", &p("bkh.jsonl"), "--out", &p("cands.jsonl"), "--max-new-tokens", "8", "--seed", "1"]);
    let report = run(&["eval-bleu", "--candidates", &p("cands.jsonl"), "--references", &p("refs.jsonl"), "--lm", &p("lm.json"), "--examples", &p("bkh.jsonl")]);
    assert!(report["bleu"]["score"].as_f64().unwrap() >= 0.0);
    assert!(report["perplexity"].as_f64().unwrap() >= 1.0);
    let self_bleu = run(&["eval-bleu", "--candidates", &p("refs.jsonl"), "--references", &p("refs.jsonl")]);
    assert_eq!(self_bleu["bleu"]["score"], 100.0);

    let req = format!(r#"{{"turns": [{{"author": "a", "text": "see {STRENGTH_URL}"}}], "k": 2}}"#);
    let out = with_stdin(&["assemble", "--kb", &p("kb")], &req);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["knowledge"]["items"].as_array().unwrap().len(), 2);
    assert!(v["violations"].as_array().unwrap().is_empty());
    assert_eq!(v["stats"]["total_tokens"], v["input"]["token_ids"].as_array().unwrap().len());
}
