//! Model capabilities behind one interface family.
//!
//! Every external model call goes through a [`Backend`]: text generation
//! from a prompt template, pair scoring (passage ranking or NLI), and visual
//! QA on a single frame. Two backends exist: [`mock::MockBackend`], a pure
//! oracle over a hand- or machine-authored world, and
//! [`remote::RemoteBackend`], a JSON-over-HTTP client.
//!
//! [`ModelClient`] adds template rendering, response parsing, retries and
//! caching on top of a backend. [`Session`] meters a client for one proof:
//! it tallies calls per capability and enforces the call budget.

pub mod cache;
pub mod mock;
pub mod parse;
pub mod remote;
pub mod templates;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::FrameRef;
pub use cache::ResponseCache;
pub use templates::{Bindings, PromptTemplate, ResponseFormat, TemplateName, TemplateSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("bad input: {0}")]
    Input(String),
    #[error("transport failure on backend {backend}: {message}")]
    Transport { backend: String, message: String },
    #[error("unparseable {template} response: {message}")]
    Parse { template: String, message: String },
    #[error("provider call budget of {limit} exhausted")]
    Budget { limit: usize },
}

impl ProviderError {
    fn retryable(&self) -> bool {
        matches!(self, ProviderError::Transport { .. } | ProviderError::Parse { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreTask {
    /// Passage relevance to a query (a passage-ranking cross-encoder).
    PassageRank,
    /// Premise-entails-hypothesis (an NLI cross-encoder).
    Nli,
}

impl ScoreTask {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreTask::PassageRank => "passage-rank",
            ScoreTask::Nli => "nli",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompletionRequest {
    pub template: TemplateName,
    pub prompt: String,
    pub bindings: Bindings,
    /// Image attached to the prompt (visual critics).
    pub frame: Option<FrameRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreRequest {
    pub premise: String,
    pub query: String,
    pub task: ScoreTask,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VqaRequest {
    pub frame: FrameRef,
    /// The bare question.
    pub question: String,
    /// The rendered VQA prompt wrapping the question.
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawVqa {
    pub text: String,
    pub confidence: f64,
}

/// A model backend. Implementations must tolerate concurrent calls.
pub trait Backend: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError>;
    fn score(&self, request: &ScoreRequest) -> Result<f64, ProviderError>;
    fn vqa(&self, request: &VqaRequest) -> Result<RawVqa, ProviderError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub premise: String,
    pub hypothesis_or_query: String,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VqaAnswer {
    Yes,
    No,
    NotEnoughInfo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VqaVerdict {
    pub answer: VqaAnswer,
    pub confidence: f64,
}

impl VqaAnswer {
    /// Case-insensitive read of a model's answer. Anything that is not a
    /// clear yes or no counts as not enough information.
    pub fn parse(text: &str) -> Self {
        let t = text
            .trim()
            .trim_start_matches(|c: char| !c.is_alphanumeric())
            .to_ascii_lowercase();
        let word_is = |w: &str| {
            t.strip_prefix(w)
                .is_some_and(|rest| !rest.starts_with(|c: char| c.is_alphanumeric()))
        };
        if t.starts_with("not enough") || t.starts_with("not sure") {
            VqaAnswer::NotEnoughInfo
        } else if word_is("yes") {
            VqaAnswer::Yes
        } else if word_is("no") {
            VqaAnswer::No
        } else {
            VqaAnswer::NotEnoughInfo
        }
    }
}

/// A parsed generation result, shaped by the template's response format.
#[derive(Debug, Clone, PartialEq)]
pub enum Generated {
    Text(String),
    Map(BTreeMap<String, String>),
    List(Vec<String>),
}

impl Generated {
    pub fn into_text(self) -> String {
        match self {
            Generated::Text(t) => t,
            Generated::List(l) => l.join("\n"),
            Generated::Map(m) => serde_json::to_string(&m).unwrap_or_default(),
        }
    }

    pub fn into_map(self) -> BTreeMap<String, String> {
        match self {
            Generated::Map(m) => m,
            _ => BTreeMap::new(),
        }
    }

    pub fn into_list(self) -> Vec<String> {
        match self {
            Generated::List(l) => l,
            Generated::Text(t) => vec![t],
            Generated::Map(m) => m.into_values().collect(),
        }
    }
}

fn parse_response(template: TemplateName, raw: &str) -> Result<Generated, ProviderError> {
    let err = |message: String| ProviderError::Parse {
        template: template.to_string(),
        message,
    };
    match template.response_format() {
        ResponseFormat::FreeText => {
            let text = raw.trim();
            if text.is_empty() {
                Err(err("empty response".into()))
            } else {
                Ok(Generated::Text(text.to_string()))
            }
        }
        ResponseFormat::JsonMap => parse::json_map(raw).map(Generated::Map).map_err(err),
        ResponseFormat::LabelList => parse::label_list(raw).map(Generated::List).map_err(err),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub retries: u32,
    /// First transport backoff; doubles on each further retry.
    pub backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retries: 2,
            backoff_ms: 250,
        }
    }
}

impl RetryPolicy {
    fn backoff(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.backoff_ms.saturating_mul(1 << (attempt - 1).min(16)))
    }
}

/// Template rendering, parsing, retries and caching over a backend.
#[derive(Clone)]
pub struct ModelClient {
    backend: Arc<dyn Backend>,
    templates: Arc<TemplateSet>,
    cache: Option<Arc<ResponseCache>>,
    retry: RetryPolicy,
}

impl ModelClient {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        Self {
            backend,
            templates: Arc::new(TemplateSet::default()),
            cache: None,
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_templates(mut self, templates: TemplateSet) -> Self {
        self.templates = Arc::new(templates);
        self
    }

    pub fn with_cache(mut self, cache: Arc<ResponseCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn backend_id(&self) -> &str {
        self.backend.id()
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    // Runs `call` with the retry policy. Transport failures back off; parse
    // failures are retried immediately. Only successful raw responses are
    // cached.
    fn with_retries<T>(
        &self,
        key: Option<&str>,
        mut call: impl FnMut() -> Result<String, ProviderError>,
        parse: impl Fn(&str) -> Result<T, ProviderError>,
    ) -> Result<T, ProviderError> {
        if let (Some(cache), Some(key)) = (&self.cache, key) {
            if let Some(raw) = cache.get(key) {
                if let Ok(value) = parse(&raw) {
                    return Ok(value);
                }
            }
        }
        let mut attempt = 0;
        loop {
            let outcome = call().and_then(|raw| parse(&raw).map(|v| (raw, v)));
            match outcome {
                Ok((raw, value)) => {
                    if let (Some(cache), Some(key)) = (&self.cache, key) {
                        cache.put(key, &raw);
                    }
                    return Ok(value);
                }
                Err(e) if e.retryable() && attempt < self.retry.retries => {
                    attempt += 1;
                    tracing::debug!(attempt, error = %e, "retrying provider call");
                    if matches!(e, ProviderError::Transport { .. }) {
                        std::thread::sleep(self.retry.backoff(attempt));
                    }
                }
                Err(e) => return Err(e),
            }
        }
    }

    pub fn generate(
        &self,
        template: TemplateName,
        bindings: &Bindings,
        frame: Option<&FrameRef>,
    ) -> Result<Generated, ProviderError> {
        let prompt = self.templates.get(template).render(bindings)?;
        let request = CompletionRequest {
            template,
            prompt,
            bindings: bindings.clone(),
            frame: frame.cloned(),
        };
        let key = cache::key(
            self.backend.id(),
            template.as_str(),
            &serde_json::json!({
                "bindings": bindings,
                "frame": frame.map(|f| &f.frame_id),
                "prompt": request.prompt,
            }),
        );
        self.with_retries(
            Some(&key),
            || self.backend.complete(&request),
            |raw| parse_response(template, raw),
        )
    }

    pub fn score_pair(
        &self,
        premise: &str,
        query: &str,
        task: ScoreTask,
    ) -> Result<PairScore, ProviderError> {
        if premise.trim().is_empty() || query.trim().is_empty() {
            return Err(ProviderError::Precondition(
                "pair scoring needs a non-empty premise and query".into(),
            ));
        }
        let request = ScoreRequest {
            premise: premise.to_string(),
            query: query.to_string(),
            task,
        };
        let key = cache::key(
            self.backend.id(),
            &format!("score:{}", task.as_str()),
            &serde_json::json!([premise, query]),
        );
        let score = self.with_retries(
            Some(&key),
            || self.backend.score(&request).map(|s| s.to_string()),
            |raw| {
                raw.parse::<f64>()
                    .ok()
                    .filter(|s| s.is_finite())
                    .ok_or_else(|| ProviderError::Parse {
                        template: "score".into(),
                        message: format!("not a finite score: {raw:?}"),
                    })
            },
        )?;
        Ok(PairScore {
            premise: request.premise,
            hypothesis_or_query: request.query,
            score,
        })
    }

    pub fn vqa(&self, frame: &FrameRef, question: &str) -> Result<VqaVerdict, ProviderError> {
        if question.trim().is_empty() {
            return Err(ProviderError::Precondition("empty VQA question".into()));
        }
        let mut bindings = Bindings::new();
        bindings.insert("question".into(), question.to_string());
        let request = VqaRequest {
            frame: frame.clone(),
            question: question.to_string(),
            prompt: self.templates.get(TemplateName::Vqa).render(&bindings)?,
        };
        let key = cache::key(
            self.backend.id(),
            "vqa",
            &serde_json::json!([frame.frame_id, request.prompt]),
        );
        let raw = self.with_retries(
            Some(&key),
            || {
                self.backend
                    .vqa(&request)
                    .map(|r| serde_json::to_string(&r).expect("raw vqa serializes"))
            },
            |raw| {
                serde_json::from_str::<RawVqa>(raw).map_err(|e| ProviderError::Parse {
                    template: "vqa".into(),
                    message: e.to_string(),
                })
            },
        )?;
        Ok(VqaVerdict {
            answer: VqaAnswer::parse(&raw.text),
            confidence: raw.confidence,
        })
    }
}

/// Per-capability call tallies, e.g. `generate:inference`, `score:nli`, `vqa`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallCounts(pub BTreeMap<String, usize>);

impl CallCounts {
    pub fn get(&self, capability: &str) -> usize {
        self.0.get(capability).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.0.values().sum()
    }

    fn bump(&mut self, capability: String) {
        *self.0.entry(capability).or_default() += 1;
    }

    pub fn merge(&mut self, other: &CallCounts) {
        for (k, v) in &other.0 {
            *self.0.entry(k.clone()).or_default() += v;
        }
    }

    pub fn generate_key(template: TemplateName) -> String {
        format!("generate:{template}")
    }

    pub fn score_key(task: ScoreTask) -> String {
        format!("score:{}", task.as_str())
    }

    pub const VQA: &'static str = "vqa";
}

/// A metered view of a [`ModelClient`] for one unit of work.
pub struct Session<'a> {
    client: &'a ModelClient,
    counts: Mutex<CallCounts>,
    used: AtomicUsize,
    budget: Option<usize>,
}

impl<'a> Session<'a> {
    pub fn new(client: &'a ModelClient, budget: Option<usize>) -> Self {
        Self {
            client,
            counts: Mutex::new(CallCounts::default()),
            used: AtomicUsize::new(0),
            budget,
        }
    }

    pub fn client(&self) -> &ModelClient {
        self.client
    }

    pub fn counts(&self) -> CallCounts {
        self.counts.lock().expect("counts lock").clone()
    }

    pub fn calls_used(&self) -> usize {
        self.used.load(Ordering::SeqCst)
    }

    pub fn exhausted(&self) -> bool {
        self.budget.is_some_and(|b| self.calls_used() >= b)
    }

    fn charge(&self, capability: String) -> Result<(), ProviderError> {
        let used = self.used.fetch_add(1, Ordering::SeqCst);
        if let Some(limit) = self.budget {
            if used >= limit {
                self.used.fetch_sub(1, Ordering::SeqCst);
                return Err(ProviderError::Budget { limit });
            }
        }
        self.counts.lock().expect("counts lock").bump(capability);
        Ok(())
    }

    pub fn generate(
        &self,
        template: TemplateName,
        bindings: &Bindings,
        frame: Option<&FrameRef>,
    ) -> Result<Generated, ProviderError> {
        self.charge(CallCounts::generate_key(template))?;
        self.client.generate(template, bindings, frame)
    }

    pub fn score_pair(&self, premise: &str, query: &str, task: ScoreTask) -> Result<PairScore, ProviderError> {
        self.charge(CallCounts::score_key(task))?;
        self.client.score_pair(premise, query, task)
    }

    pub fn vqa(&self, frame: &FrameRef, question: &str) -> Result<VqaVerdict, ProviderError> {
        self.charge(CallCounts::VQA.to_string())?;
        self.client.vqa(frame, question)
    }
}

/// Builds bindings from `(name, value)` pairs.
pub fn bindings<const N: usize>(pairs: [(&str, String); N]) -> Bindings {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicU32;

    /// Fails the first `failures` calls with a transport error.
    struct Flaky {
        failures: u32,
        calls: AtomicU32,
        reply: String,
    }

    impl Backend for Flaky {
        fn id(&self) -> &str {
            "flaky"
        }
        fn complete(&self, _: &CompletionRequest) -> Result<String, ProviderError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                Err(ProviderError::Transport {
                    backend: "flaky".into(),
                    message: "connection reset".into(),
                })
            } else {
                Ok(self.reply.clone())
            }
        }
        fn score(&self, _: &ScoreRequest) -> Result<f64, ProviderError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(0.5)
        }
        fn vqa(&self, _: &VqaRequest) -> Result<RawVqa, ProviderError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(RawVqa {
                text: "Yes, the door is open.".into(),
                confidence: 2.0,
            })
        }
    }

    fn flaky(failures: u32, reply: &str) -> Arc<Flaky> {
        Arc::new(Flaky {
            failures,
            calls: AtomicU32::new(0),
            reply: reply.into(),
        })
    }

    fn fast() -> RetryPolicy {
        RetryPolicy {
            retries: 2,
            backoff_ms: 1,
        }
    }

    fn statement() -> Bindings {
        bindings([("statement", "The door is open.".to_string())])
    }

    #[test]
    fn transport_failures_are_retried_then_surface() {
        let backend = flaky(2, "Is the door open?");
        let client = ModelClient::new(backend.clone()).with_retry(fast());
        let out = client
            .generate(TemplateName::QuestionForm, &statement(), None)
            .unwrap();
        assert_eq!(out.into_text(), "Is the door open?");
        assert_eq!(backend.calls.load(Ordering::SeqCst), 3);

        let backend = flaky(3, "unused");
        let client = ModelClient::new(backend.clone()).with_retry(fast());
        let err = client
            .generate(TemplateName::QuestionForm, &statement(), None)
            .unwrap_err();
        assert!(matches!(err, ProviderError::Transport { .. }));
        assert_eq!(backend.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn parse_failures_become_typed_errors() {
        let backend = flaky(0, "no json here");
        let client = ModelClient::new(backend.clone()).with_retry(fast());
        let b = bindings([
            ("question", "Is it late?".to_string()),
            ("dialogue", "A: hi".to_string()),
        ]);
        let err = client.generate(TemplateName::Inference, &b, None).unwrap_err();
        assert!(matches!(err, ProviderError::Parse { ref template, .. } if template == "inference"));
        assert_eq!(backend.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn cache_serves_repeat_requests() {
        let backend = flaky(0, "Is the door open?");
        let cache = Arc::new(ResponseCache::in_memory());
        let client = ModelClient::new(backend.clone()).with_cache(cache.clone());
        for _ in 0..4 {
            client
                .generate(TemplateName::QuestionForm, &statement(), None)
                .unwrap();
        }
        assert_eq!(backend.calls.load(Ordering::SeqCst), 1);
        assert_eq!(cache.hits(), 3);
        // a different template is a different key
        client
            .generate(TemplateName::Decomposition, &statement(), None)
            .unwrap();
        assert_eq!(backend.calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn empty_premise_is_rejected() {
        let client = ModelClient::new(flaky(0, ""));
        assert!(matches!(
            client.score_pair("", "q", ScoreTask::Nli),
            Err(ProviderError::Precondition(_))
        ));
    }

    #[test]
    fn vqa_answers_parse_case_insensitively() {
        assert_eq!(VqaAnswer::parse("YES"), VqaAnswer::Yes);
        assert_eq!(VqaAnswer::parse("yes, he is."), VqaAnswer::Yes);
        assert_eq!(VqaAnswer::parse(" No."), VqaAnswer::No);
        assert_eq!(VqaAnswer::parse("NOT ENOUGH INFO"), VqaAnswer::NotEnoughInfo);
        assert_eq!(VqaAnswer::parse("Nobody knows"), VqaAnswer::NotEnoughInfo);
        assert_eq!(VqaAnswer::parse("The man is sitting."), VqaAnswer::NotEnoughInfo);
        assert_eq!(VqaAnswer::parse(""), VqaAnswer::NotEnoughInfo);

        let client = ModelClient::new(flaky(0, ""));
        let frame = FrameRef {
            frame_id: "f0".into(),
            timestamp_s: 0.0,
            path: "f0.jpg".into(),
        };
        let verdict = client.vqa(&frame, "Is the door open?").unwrap();
        assert_eq!(verdict.answer, VqaAnswer::Yes);
        assert_eq!(verdict.confidence, 2.0);
    }

    #[test]
    fn session_enforces_budget_and_counts() {
        let client = ModelClient::new(flaky(0, "Is the door open?"));
        let session = Session::new(&client, Some(2));
        session.score_pair("a", "b", ScoreTask::Nli).unwrap();
        session
            .generate(TemplateName::QuestionForm, &statement(), None)
            .unwrap();
        assert!(session.exhausted());
        assert_eq!(
            session.score_pair("a", "b", ScoreTask::Nli),
            Err(ProviderError::Budget { limit: 2 })
        );
        let counts = session.counts();
        assert_eq!(counts.get("score:nli"), 1);
        assert_eq!(counts.get("generate:question_form"), 1);
        assert_eq!(counts.total(), 2);
    }
}
