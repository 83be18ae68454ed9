//! Chat-agent transport with live, record and replay modes.
//!
//! Requests are identified by `request_hash`, the SHA-256 of the canonical
//! JSON of `(conversation, schema_id)` (object keys sorted, no whitespace).
//! Replies are validated against a named schema; invalid replies surface as
//! [`GatewayError::Validation`] with the raw text kept for upstream retries.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const TRANSCRIPT_FILE: &str = "agent_transcript.jsonl";
pub const TOKEN_ENV: &str = "SHERLOCK_AGENT_TOKEN";

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("no transcript entry for request {0}")]
    ReplayMiss(String),
    #[error("endpoint returned status {status}: {body}")]
    Endpoint { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("reply failed {schema_id} validation: {message}")]
    Validation { schema_id: String, message: String, raw_text: String },
    #[error("unknown schema {0:?}")]
    UnknownSchema(String),
    #[error("empty conversation")]
    EmptyConversation,
    #[error("invalid gateway config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed transcript entry: {message}")]
    Transcript { path: PathBuf, line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentRequest {
    pub conversation: Vec<Message>,
    pub schema_id: String,
    pub request_hash: String,
}

impl AgentRequest {
    pub fn new(conversation: Vec<Message>, schema_id: impl Into<String>) -> Result<Self, GatewayError> {
        if conversation.is_empty() {
            return Err(GatewayError::EmptyConversation);
        }
        let schema_id = schema_id.into();
        let request_hash = request_hash(&conversation, &schema_id);
        Ok(AgentRequest { conversation, schema_id, request_hash })
    }
}

pub fn request_hash(conversation: &[Message], schema_id: &str) -> String {
    let canonical = serde_json::json!({ "conversation": conversation, "schema_id": schema_id });
    // serde_json::Value keeps object keys sorted, so this string is canonical
    hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentReply {
    pub raw_text: String,
    pub parsed: Option<Value>,
}

/// Anything that turns a request into raw reply text.
pub trait ChatAgent: Send + Sync {
    fn complete_raw(&self, req: &AgentRequest) -> Result<String, GatewayError>;
}

impl<A: ChatAgent + ?Sized> ChatAgent for Box<A> {
    fn complete_raw(&self, req: &AgentRequest) -> Result<String, GatewayError> {
        (**self).complete_raw(req)
    }
}

impl<A: ChatAgent + ?Sized> ChatAgent for std::sync::Arc<A> {
    fn complete_raw(&self, req: &AgentRequest) -> Result<String, GatewayError> {
        (**self).complete_raw(req)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldType {
    String,
    Bool,
}

/// Required top-level keys and their types, per schema id.
#[derive(Debug, Clone)]
pub struct SchemaRegistry {
    schemas: HashMap<String, Vec<(String, FieldType)>>,
}

impl Default for SchemaRegistry {
    fn default() -> Self {
        let mut r = SchemaRegistry { schemas: HashMap::new() };
        r.register(crate::debugging::SUMMARY_SCHEMA, &[("WebPageProblem", FieldType::String)]);
        r.register(
            crate::debugging::ALIGNMENT_SCHEMA,
            &[
                ("WebPageProblemUseConditions", FieldType::String),
                ("Equivalence", FieldType::Bool),
                ("Rationale", FieldType::String),
            ],
        );
        r
    }
}

impl SchemaRegistry {
    pub fn register(&mut self, id: &str, fields: &[(&str, FieldType)]) {
        self.schemas.insert(id.into(), fields.iter().map(|(k, t)| (k.to_string(), *t)).collect());
    }

    pub fn validate(&self, schema_id: &str, raw_text: &str) -> Result<Value, GatewayError> {
        let fields = self.schemas.get(schema_id).ok_or_else(|| GatewayError::UnknownSchema(schema_id.into()))?;
        let fail = |message: String| GatewayError::Validation {
            schema_id: schema_id.into(),
            message,
            raw_text: raw_text.into(),
        };
        let value: Value = serde_json::from_str(json_body(raw_text)).map_err(|e| fail(format!("not JSON: {e}")))?;
        let obj = value.as_object().ok_or_else(|| fail("reply is not a JSON object".into()))?;
        for (key, ty) in fields {
            let ok = match (obj.get(key), ty) {
                (Some(Value::String(_)), FieldType::String) => true,
                (Some(Value::Bool(_)), FieldType::Bool) => true,
                (None, _) => return Err(fail(format!("missing key {key:?}"))),
                _ => false,
            };
            if !ok {
                return Err(fail(format!("key {key:?} is not a {ty:?}")));
            }
        }
        Ok(value)
    }
}

/// The JSON object inside a reply, tolerating a surrounding code fence.
fn json_body(raw: &str) -> &str {
    let t = raw.trim();
    match (t.find('{'), t.rfind('}')) {
        (Some(s), Some(e)) if s < e => &t[s..=e],
        _ => t,
    }
}

/// An agent plus reply validation.
pub struct Gateway {
    agent: Box<dyn ChatAgent>,
    schemas: SchemaRegistry,
}

impl Gateway {
    pub fn new(agent: Box<dyn ChatAgent>) -> Self {
        Gateway { agent, schemas: SchemaRegistry::default() }
    }

    pub fn with_schemas(agent: Box<dyn ChatAgent>, schemas: SchemaRegistry) -> Self {
        Gateway { agent, schemas }
    }

    pub fn complete(&self, req: &AgentRequest) -> Result<AgentReply, GatewayError> {
        let raw_text = self.agent.complete_raw(req)?;
        let parsed = self.schemas.validate(&req.schema_id, &raw_text)?;
        Ok(AgentReply { raw_text, parsed: Some(parsed) })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub request_hash: String,
    pub schema_id: String,
    pub conversation: Vec<Message>,
    pub raw_text: String,
}

/// Serves replies recorded in a transcript; misses are errors.
#[derive(Debug, Clone, Default)]
pub struct ReplayAgent {
    entries: HashMap<String, String>,
}

impl ReplayAgent {
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = fs::read_to_string(path).map_err(|source| GatewayError::Io { path: path.into(), source })?;
        let mut entries = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: TranscriptEntry = serde_json::from_str(line).map_err(|e| GatewayError::Transcript {
                path: path.into(),
                line: i + 1,
                message: e.to_string(),
            })?;
            // later entries win, so re-recording a request supersedes it
            entries.insert(e.request_hash, e.raw_text);
        }
        Ok(ReplayAgent { entries })
    }

    pub fn from_entries(entries: impl IntoIterator<Item = TranscriptEntry>) -> Self {
        ReplayAgent { entries: entries.into_iter().map(|e| (e.request_hash, e.raw_text)).collect() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl ChatAgent for ReplayAgent {
    fn complete_raw(&self, req: &AgentRequest) -> Result<String, GatewayError> {
        self.entries.get(&req.request_hash).cloned().ok_or_else(|| GatewayError::ReplayMiss(req.request_hash.clone()))
    }
}

/// Forwards to another agent and appends every exchange to a transcript.
pub struct RecordingAgent<A> {
    inner: A,
    path: PathBuf,
    lock: Mutex<()>,
}

impl<A: ChatAgent> RecordingAgent<A> {
    pub fn new(inner: A, path: impl Into<PathBuf>) -> Self {
        RecordingAgent { inner, path: path.into(), lock: Mutex::new(()) }
    }
}

impl<A: ChatAgent> ChatAgent for RecordingAgent<A> {
    fn complete_raw(&self, req: &AgentRequest) -> Result<String, GatewayError> {
        let raw_text = self.inner.complete_raw(req)?;
        let entry = TranscriptEntry {
            request_hash: req.request_hash.clone(),
            schema_id: req.schema_id.clone(),
            conversation: req.conversation.clone(),
            raw_text: raw_text.clone(),
        };
        let line = serde_json::to_string(&entry).expect("entry serializes") + "\n";
        let io = |source| GatewayError::Io { path: self.path.clone(), source };
        let _guard = self.lock.lock().expect("transcript lock");
        if let Some(dir) = self.path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io)?;
        }
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path).map_err(io)?;
        f.write_all(line.as_bytes()).map_err(io)?;
        Ok(raw_text)
    }
}

/// Token bucket: `burst` tokens, refilled at `per_second`.
#[derive(Debug)]
pub struct RateLimiter {
    per_second: f64,
    burst: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    pub fn new(per_second: f64, burst: u32) -> Self {
        let burst = f64::from(burst.max(1));
        RateLimiter { per_second, burst, state: Mutex::new((burst, Instant::now())) }
    }

    /// Block until a token is available, then take it.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut st = self.state.lock().expect("limiter lock");
                let now = Instant::now();
                st.0 = (st.0 + now.duration_since(st.1).as_secs_f64() * self.per_second).min(self.burst);
                st.1 = now;
                if st.0 >= 1.0 {
                    st.0 -= 1.0;
                    return;
                }
                (1.0 - st.0) / self.per_second
            };
            std::thread::sleep(Duration::from_secs_f64(wait));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    /// Base URL; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    pub timeout_secs: f64,
    pub requests_per_second: f64,
    pub burst: u32,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: "http://127.0.0.1:8000/v1".into(),
            model: "gpt-4o".into(),
            timeout_secs: 60.0,
            requests_per_second: 2.0,
            burst: 1,
        }
    }
}

/// OpenAI-compatible `/chat/completions` client, temperature 0.
pub struct LiveAgent {
    config: EndpointConfig,
    token: Option<String>,
    http: ureq::Agent,
    limiter: RateLimiter,
}

impl LiveAgent {
    pub fn new(config: EndpointConfig) -> Result<Self, GatewayError> {
        if url::Url::parse(&config.base_url).is_err() {
            return Err(GatewayError::Config(format!("base_url {:?} is not a URL", config.base_url)));
        }
        if !(config.requests_per_second > 0.0) {
            return Err(GatewayError::Config("requests_per_second must be positive".into()));
        }
        let http: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .build()
            .into();
        let limiter = RateLimiter::new(config.requests_per_second, config.burst);
        let token = std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty());
        Ok(LiveAgent { config, token, http, limiter })
    }
}

impl ChatAgent for LiveAgent {
    fn complete_raw(&self, req: &AgentRequest) -> Result<String, GatewayError> {
        self.limiter.acquire();
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let body = serde_json::json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": req.conversation,
        });
        let mut call = self.http.post(&url);
        if let Some(t) = &self.token {
            call = call.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = call.send_json(&body).map_err(|e| GatewayError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| GatewayError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(GatewayError::Endpoint { status, body: text });
        }
        let v: Value = serde_json::from_str(&text).map_err(|e| GatewayError::Transport(format!("bad response body: {e}")))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| GatewayError::Transport("response has no choices[0].message.content".into()))
    }
}
