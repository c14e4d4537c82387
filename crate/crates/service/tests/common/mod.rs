#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdout, Command, Output, Stdio};

use serde::Deserialize;
use serde_json::Value;

pub const BIN: &str = env!("CARGO_BIN_EXE_counsel");

pub fn fixture(rel: &str) -> PathBuf {
    counsel_testkit::fixture(rel)
}

#[derive(Deserialize)]
pub struct Script {
    pub config: counsel_core::matching::MatchConfig,
    pub turns: Vec<String>,
}

pub fn script() -> Script {
    let text = std::fs::read_to_string(fixture("session_script.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

pub fn counsel(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn counsel")
}

/// A `counsel serve` child process on an ephemeral port.
pub struct Server {
    child: Child,
    _stdout: BufReader<ChildStdout>,
    pub base: String,
    pub data_dir: PathBuf,
}

impl Server {
    /// Starts with the fixture KB and the scripted session thresholds.
    pub fn start(data_dir: &Path) -> Self {
        let cfg = script().config;
        let mut child = Command::new(BIN)
            .args(["serve", "--listen", "127.0.0.1:0", "--backend", "mock"])
            .arg("--data-dir")
            .arg(data_dir)
            .arg("--kb")
            .arg(fixture("kb.json"))
            .arg("--lexicon-dir")
            .arg(fixture("lexicon"))
            .args(["--initial-threshold", &cfg.initial_threshold.to_string()])
            .args(["--intervention-threshold", &cfg.intervention_threshold.to_string()])
            .args(["--keyword-k", &cfg.keyword_k.to_string()])
            .args(["--summary-sentences", &cfg.summary_sentences.to_string()])
            .env("RUST_LOG", "warn")
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .expect("spawn server");
        let mut stdout = BufReader::new(child.stdout.take().unwrap());
        let mut line = String::new();
        stdout.read_line(&mut line).unwrap();
        let addr = line
            .trim()
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected server output {line:?}"))
            .to_string();
        Self {
            child,
            _stdout: stdout,
            base: format!("http://{addr}"),
            data_dir: data_dir.to_path_buf(),
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    /// SIGKILL, no shutdown path runs.
    pub fn kill(mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }

    pub fn log_path(&self, session_id: &str) -> PathBuf {
        self.data_dir.join("sessions").join(format!("{session_id}.jsonl"))
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub fn client() -> reqwest::blocking::Client {
    reqwest::blocking::Client::new()
}

pub fn create_session(server: &Server) -> String {
    let resp = client().post(server.url("/sessions")).send().unwrap();
    assert_eq!(resp.status().as_u16(), 201);
    let body: Value = resp.json().unwrap();
    check_create_schema(&body).unwrap();
    body["session_id"].as_str().unwrap().to_string()
}

pub fn send(server: &Server, id: &str, text: &str) -> (u16, Value) {
    let resp = client()
        .post(server.url(&format!("/sessions/{id}/messages")))
        .json(&serde_json::json!({ "text": text }))
        .send()
        .unwrap();
    let status = resp.status().as_u16();
    (status, resp.json().unwrap())
}

pub fn snapshot(server: &Server, id: &str) -> Value {
    let resp = client().get(server.url(&format!("/sessions/{id}"))).send().unwrap();
    assert_eq!(resp.status().as_u16(), 200);
    resp.json().unwrap()
}

const STAGES: [&str; 4] = ["matching", "elicitation", "intervention", "closed"];

fn keys(body: &Value) -> Vec<&str> {
    body.as_object().map(|m| m.keys().map(String::as_str).collect()).unwrap_or_default()
}

fn stage_ok(v: &Value) -> bool {
    v.as_str().is_some_and(|s| STAGES.contains(&s))
}

fn unit(v: &Value) -> bool {
    v.as_f64().is_some_and(|x| (0.0..=1.0).contains(&x))
}

pub fn check_create_schema(body: &Value) -> Result<(), String> {
    let ok = keys(body) == ["session_id", "stage"] && body["session_id"].is_string() && body["stage"] == "matching";
    ok.then_some(()).ok_or_else(|| format!("bad create response {body}"))
}

pub fn check_message_schema(body: &Value) -> Result<(), String> {
    let k = keys(body);
    let expected: &[&str] = if body.get("matched_disorder").is_some() {
        &["best_similarity", "matched_disorder", "reply", "stage"]
    } else {
        &["best_similarity", "reply", "stage"]
    };
    let ok = k == expected
        && body["reply"].as_str().is_some_and(|r| !r.trim().is_empty())
        && stage_ok(&body["stage"])
        && unit(&body["best_similarity"])
        && body.get("matched_disorder").is_none_or(Value::is_string);
    ok.then_some(()).ok_or_else(|| format!("bad message response {body}"))
}

pub fn check_snapshot_schema(body: &Value) -> Result<(), String> {
    let k = keys(body);
    let expected = [
        "best_similarity",
        "config",
        "created_at",
        "matched_disorder",
        "session_id",
        "similarity_history",
        "stage",
        "transcript",
    ];
    let transcript_ok = body["transcript"].as_array().is_some_and(|turns| {
        turns.iter().enumerate().all(|(i, t)| {
            let speaker = if i % 2 == 0 { "client" } else { "agent" };
            t["speaker"] == speaker && t["text"].is_string() && t["timestamp"].is_string()
        })
    });
    let history_ok = body["similarity_history"]
        .as_array()
        .is_some_and(|h| h.iter().all(|r| r["turn_index"].is_u64() && unit(&r["similarity"])));
    let ok = k == expected && stage_ok(&body["stage"]) && transcript_ok && history_ok;
    ok.then_some(()).ok_or_else(|| format!("bad snapshot {body}"))
}

/// Checks log invariants: contiguous seq from 1, `created` first, nothing
/// after `closed`, and each turn's events contiguous and ending in
/// `agent_msg` or `error`. Returns the client/agent text pairs.
pub fn check_log(path: &Path) -> Result<Vec<(String, String)>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let events: Vec<Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    if events.first().map(|e| &e["kind"]) != Some(&Value::from("created")) {
        return Err("first event is not created".into());
    }
    let mut pairs = Vec::new();
    let mut open: Option<String> = None;
    let mut closed = false;
    for (i, e) in events.iter().enumerate() {
        if e["seq"].as_u64() != Some(i as u64 + 1) {
            return Err(format!("seq {} at position {}", e["seq"], i + 1));
        }
        if closed {
            return Err("event after closed".into());
        }
        let kind = e["kind"].as_str().unwrap_or_default();
        match (kind, &open) {
            ("created", _) if i == 0 => {}
            ("client_msg", None) => open = Some(e["payload"]["text"].as_str().unwrap_or_default().to_string()),
            ("match_set" | "stage_change", Some(_)) => {}
            ("agent_msg", Some(client)) => {
                pairs.push((client.clone(), e["payload"]["text"].as_str().unwrap_or_default().to_string()));
                open = None;
            }
            ("error", Some(_)) => open = None,
            ("closed", None) => closed = true,
            _ => return Err(format!("unexpected `{kind}` at seq {}", i + 1)),
        }
    }
    if open.is_some() {
        return Err("log ends inside a turn".into());
    }
    Ok(pairs)
}

/// The mock backend echoes the first 20 characters of the client block.
pub fn echo_of(client_text: &str) -> String {
    client_text.chars().take(20).collect()
}
