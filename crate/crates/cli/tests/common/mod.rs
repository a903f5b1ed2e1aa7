//! A loopback HTTP endpoint that speaks the remote backend's wire format and
//! answers from a mock world. It lets the remote path run without a network.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde_json::{json, Value};

use proofloom::dataset::FrameRef;
use proofloom::providers::mock::{MockBackend, OracleWorld};
use proofloom::providers::templates::{Bindings, TemplateName};
use proofloom::providers::{Backend, CompletionRequest, ScoreRequest, ScoreTask, VqaRequest};

pub fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_proofloom"));
    cmd.env_remove("PROOFLOOM_CONFIG").env("RUST_LOG", "warn");
    cmd
}

/// Runs the binary with the network forbidden.
pub fn offline() -> Command {
    let mut cmd = bin();
    cmd.env("PROOFLOOM_FORBID_NETWORK", "1");
    cmd
}

pub fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("spawn proofloom")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub struct Loopback {
    pub url: String,
    /// Requests answered so far.
    pub requests: Arc<AtomicUsize>,
}

impl Loopback {
    /// Serves `world` on an ephemeral port for the life of the process.
    pub fn start(world: OracleWorld) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind loopback");
        let url = format!("http://{}/", listener.local_addr().unwrap());
        let backend = Arc::new(MockBackend::new(world));
        let requests = Arc::new(AtomicUsize::new(0));
        let counter = Arc::clone(&requests);
        std::thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                let backend = Arc::clone(&backend);
                let counter = Arc::clone(&counter);
                std::thread::spawn(move || serve(stream, &backend, &counter));
            }
        });
        Self { url, requests }
    }
}

// One connection, possibly several keep-alive requests.
fn serve(stream: TcpStream, backend: &MockBackend, counter: &AtomicUsize) {
    let mut writer = stream.try_clone().expect("clone stream");
    let mut reader = BufReader::new(stream);
    while let Some(body) = read_request(&mut reader) {
        counter.fetch_add(1, Ordering::SeqCst);
        let (status, reply) = match serde_json::from_slice::<Value>(&body) {
            Ok(v) => match dispatch(backend, &v) {
                Ok(r) => ("200 OK", r),
                Err(e) => ("500 Internal Server Error", json!({ "error": e })),
            },
            Err(e) => ("400 Bad Request", json!({ "error": e.to_string() })),
        };
        let text = reply.to_string();
        let head = format!(
            "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n",
            text.len()
        );
        if writer.write_all(head.as_bytes()).and_then(|_| writer.write_all(text.as_bytes())).is_err() {
            return;
        }
    }
}

fn read_request(reader: &mut impl BufRead) -> Option<Vec<u8>> {
    let mut length = 0usize;
    let mut chunked = false;
    let mut first = true;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).ok()? == 0 {
            return None;
        }
        let line = line.trim_end();
        if line.is_empty() {
            if first {
                continue;
            }
            break;
        }
        first = false;
        if let Some((name, value)) = line.split_once(':') {
            let value = value.trim();
            match name.trim().to_ascii_lowercase().as_str() {
                "content-length" => length = value.parse().ok()?,
                "transfer-encoding" => chunked = value.eq_ignore_ascii_case("chunked"),
                _ => {}
            }
        }
    }
    let mut body = Vec::new();
    if chunked {
        loop {
            let mut size = String::new();
            reader.read_line(&mut size).ok()?;
            let n = usize::from_str_radix(size.trim(), 16).ok()?;
            let mut chunk = vec![0; n + 2];
            reader.read_exact(&mut chunk).ok()?;
            if n == 0 {
                break;
            }
            body.extend_from_slice(&chunk[..n]);
        }
    } else {
        body.resize(length, 0);
        reader.read_exact(&mut body).ok()?;
    }
    Some(body)
}

fn field<'a>(v: &'a Value, key: &str) -> Result<&'a str, String> {
    v[key].as_str().ok_or_else(|| format!("missing string field {key}"))
}

fn frame(v: &Value) -> Result<FrameRef, String> {
    Ok(FrameRef {
        frame_id: field(v, "frame_id")?.to_string(),
        timestamp_s: v["timestamp_s"].as_f64().ok_or("missing timestamp_s")?,
        path: v["image_path"].as_str().unwrap_or("").into(),
    })
}

fn dispatch(backend: &MockBackend, v: &Value) -> Result<Value, String> {
    match v["task"].as_str() {
        Some("score") => {
            let task = match field(v, "mode")? {
                "nli" => ScoreTask::Nli,
                "passage-rank" => ScoreTask::PassageRank,
                other => return Err(format!("unknown mode {other}")),
            };
            let request = ScoreRequest {
                premise: field(v, "premise")?.to_string(),
                query: field(v, "query")?.to_string(),
                task,
            };
            let score = backend.score(&request).map_err(|e| e.to_string())?;
            Ok(json!({ "score": score }))
        }
        Some("vqa") => {
            if v["image_path"].is_null() && v["image_base64"].is_null() {
                return Err("vqa request without an image".into());
            }
            let request = VqaRequest {
                frame: frame(v)?,
                question: field(v, "question")?.to_string(),
                prompt: field(v, "prompt")?.to_string(),
            };
            let raw = backend.vqa(&request).map_err(|e| e.to_string())?;
            Ok(json!({ "answer": raw.text, "confidence": raw.confidence }))
        }
        Some(other) => Err(format!("unknown task {other}")),
        None => {
            let template: TemplateName = field(v, "template")?.parse().map_err(|e| format!("{e:?}"))?;
            let bindings: Bindings = serde_json::from_value(v["bindings"].clone()).map_err(|e| e.to_string())?;
            let request = CompletionRequest {
                template,
                prompt: field(v, "prompt")?.to_string(),
                bindings,
                frame: if v["frame"].is_null() { None } else { Some(frame(&v["frame"])?) },
            };
            let text = backend.complete(&request).map_err(|e| e.to_string())?;
            Ok(json!({ "text": text }))
        }
    }
}
