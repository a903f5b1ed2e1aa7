//! JSON-over-HTTP backend.
//!
//! Every capability is one `POST` of a JSON object to a single endpoint:
//!
//! * generation: `{"template", "bindings", "prompt", "frame"?}`
//!   answered by `{"text": ...}`;
//! * pair scoring: `{"task": "score", "mode": "nli" | "passage-rank", "premise", "query"}`
//!   answered by `{"score": ...}`;
//! * visual QA: `{"task": "vqa", "question", "prompt", "frame_id", "timestamp_s"}`
//!   plus `image_base64` or `image_path`, answered by `{"answer", "confidence"}`.
//!
//! Setting `PROOFLOOM_FORBID_NETWORK` makes any attempt to contact the
//! endpoint panic, which is how offline suites prove they stay offline.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Backend, CompletionRequest, ProviderError, RawVqa, ScoreRequest, VqaRequest};
use crate::dataset::FrameRef;

pub const FORBID_NETWORK_ENV: &str = "PROOFLOOM_FORBID_NETWORK";

/// How frame images travel to the endpoint.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FramePayload {
    /// Image bytes inline, base64 encoded.
    #[default]
    Base64,
    /// A path the server can read itself.
    Path,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteOptions {
    pub frame_payload: FramePayload,
    pub max_in_flight: usize,
    pub timeout_s: u64,
}

impl Default for RemoteOptions {
    fn default() -> Self {
        Self {
            frame_payload: FramePayload::Base64,
            max_in_flight: 4,
            timeout_s: 120,
        }
    }
}

// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct Gate {
    free: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("gate lock");
        while *free == 0 {
            free = self.freed.wait(free).expect("gate lock");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("gate lock") += 1;
        self.0.freed.notify_one();
    }
}

pub struct RemoteBackend {
    endpoint: String,
    agent: ureq::Agent,
    options: RemoteOptions,
    gate: Gate,
}

#[derive(Deserialize)]
struct TextReply {
    text: String,
}

#[derive(Deserialize)]
struct ScoreReply {
    score: f64,
}

#[derive(Deserialize)]
struct VqaReply {
    answer: String,
    #[serde(default)]
    confidence: Option<f64>,
}

impl RemoteBackend {
    pub fn new(endpoint: impl Into<String>, options: RemoteOptions) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(options.timeout_s.max(1))))
            .build()
            .into();
        Self {
            endpoint: endpoint.into(),
            agent,
            gate: Gate::new(options.max_in_flight),
            options,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn transport(&self, message: impl ToString) -> ProviderError {
        ProviderError::Transport {
            backend: self.endpoint.clone(),
            message: message.to_string(),
        }
    }

    fn post<T: for<'de> Deserialize<'de>>(&self, body: &Value, what: &str) -> Result<T, ProviderError> {
        if std::env::var_os(FORBID_NETWORK_ENV).is_some() {
            panic!("network access attempted while {FORBID_NETWORK_ENV} is set");
        }
        let _permit = self.gate.acquire();
        let mut response = self
            .agent
            .post(&self.endpoint)
            .send_json(body)
            .map_err(|e| self.transport(e))?;
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| self.transport(e))?;
        serde_json::from_str(&text).map_err(|e| ProviderError::Parse {
            template: what.to_string(),
            message: format!("{e}: {text}"),
        })
    }

    fn frame_fields(&self, frame: &FrameRef) -> Result<Value, ProviderError> {
        let mut fields = json!({
            "frame_id": frame.frame_id,
            "timestamp_s": frame.timestamp_s,
        });
        let image = match self.options.frame_payload {
            FramePayload::Path => ("image_path", frame.path.display().to_string()),
            FramePayload::Base64 => {
                let bytes = std::fs::read(&frame.path).map_err(|e| {
                    ProviderError::Input(format!("frame {}: {e}", frame.path.display()))
                })?;
                (
                    "image_base64",
                    base64::engine::general_purpose::STANDARD.encode(bytes),
                )
            }
        };
        fields[image.0] = Value::String(image.1);
        Ok(fields)
    }
}

impl Backend for RemoteBackend {
    fn id(&self) -> &str {
        &self.endpoint
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        let mut body = json!({
            "template": request.template.as_str(),
            "prompt": request.prompt,
            "bindings": request.bindings,
        });
        if let Some(frame) = &request.frame {
            body["frame"] = self.frame_fields(frame)?;
        }
        let reply: TextReply = self.post(&body, request.template.as_str())?;
        Ok(reply.text)
    }

    fn score(&self, request: &ScoreRequest) -> Result<f64, ProviderError> {
        let body = json!({
            "task": "score",
            "mode": request.task.as_str(),
            "premise": request.premise,
            "query": request.query,
        });
        let reply: ScoreReply = self.post(&body, "score")?;
        Ok(reply.score)
    }

    fn vqa(&self, request: &VqaRequest) -> Result<RawVqa, ProviderError> {
        let mut body = self.frame_fields(&request.frame)?;
        body["task"] = json!("vqa");
        body["question"] = json!(request.question);
        body["prompt"] = json!(request.prompt);
        let reply: VqaReply = self.post(&body, "vqa")?;
        Ok(RawVqa {
            text: reply.answer,
            confidence: reply.confidence.unwrap_or(0.0),
        })
    }
}
