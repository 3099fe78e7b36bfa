//! Model access: role-tagged chat and embedding clients with call accounting.
//!
//! Everything that talks to a model goes through [`ModelClient`]. Two
//! implementations ship with the crate: [`mock::MockClient`], a fully
//! deterministic scripted client used by every offline test, and
//! [`wire::WireClient`], which speaks the OpenAI-compatible chat-completions
//! and embeddings protocol.

pub mod extract;
pub mod mock;
pub mod template;
pub mod wire;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Pipeline role a chat request is issued for. The mock client keys its
/// scripted responses on this, and the ledger accounts per role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Initializer,
    Evolver,
    Decomposer,
    Worker,
    Checker,
    Reasoner,
    Judge,
}

impl Role {
    pub const ALL: [Role; 7] = [
        Role::Initializer,
        Role::Evolver,
        Role::Decomposer,
        Role::Worker,
        Role::Checker,
        Role::Reasoner,
        Role::Judge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Role::Initializer => "initializer",
            Role::Evolver => "evolver",
            Role::Decomposer => "decomposer",
            Role::Worker => "worker",
            Role::Checker => "checker",
            Role::Reasoner => "reasoner",
            Role::Judge => "judge",
        }
    }

    pub fn from_name(name: &str) -> Option<Role> {
        Role::ALL.iter().copied().find(|r| r.name() == name)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One segment of a chat request: plain text or an image attachment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Part {
    Text(String),
    Image(PathBuf),
}

/// A single chat completion request.
///
/// Requests always carry at least one text part. Image parts may only be
/// attached when the backing client reports [`ModelClient::vision_capable`];
/// callers are responsible for checking before attaching.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub role: Role,
    pub parts: Vec<Part>,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
}

impl ChatRequest {
    pub fn text(role: Role, prompt: impl Into<String>) -> Self {
        ChatRequest {
            role,
            parts: vec![Part::Text(prompt.into())],
            temperature: 0.0,
            max_tokens: None,
        }
    }

    pub fn with_image(mut self, path: impl Into<PathBuf>) -> Self {
        self.parts.push(Part::Image(path.into()));
        self
    }

    /// Flattened text view of the request, with image parts shown as markers.
    /// Used for ledger estimates and exchange logs.
    pub fn prompt_text(&self) -> String {
        let mut out = String::new();
        for part in &self.parts {
            if !out.is_empty() {
                out.push('\n');
            }
            match part {
                Part::Text(t) => out.push_str(t),
                Part::Image(p) => {
                    out.push_str("[image: ");
                    out.push_str(&p.display().to_string());
                    out.push(']');
                }
            }
        }
        out
    }

    pub fn has_images(&self) -> bool {
        self.parts.iter().any(|p| matches!(p, Part::Image(_)))
    }
}

/// Errors surfaced by client implementations.
#[derive(Debug, Error)]
pub enum ClientError {
    #[error("model unavailable after {attempts} attempt(s): {reason}")]
    ModelUnavailable { attempts: u32, reason: String },
    #[error("authentication failure: {0}")]
    AuthFailure(String),
    #[error("invalid client configuration: {0}")]
    InvalidConfig(String),
}

/// Connection settings for a wire client. Also drives retry behavior of the
/// mock so scripted failure scenarios exercise the same budget logic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClientConfig {
    /// Base URL of an OpenAI-compatible endpoint, up to and including `/v1`.
    pub base_url: String,
    pub model: String,
    pub embedding_model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: u64,
    /// Number of retries after the first attempt for transient failures.
    pub retry_budget: u32,
    pub vision_capable: bool,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            base_url: "http://localhost:8000/v1".to_string(),
            model: "qwen3-vl-32b-instruct".to_string(),
            embedding_model: "qwen3-embedding-8b".to_string(),
            api_key_env: "G2_API_KEY".to_string(),
            timeout_secs: 120,
            retry_budget: 2,
            vision_capable: true,
        }
    }
}

impl ClientConfig {
    pub fn validate(&self) -> Result<(), ClientError> {
        if self.retry_budget > 5 {
            return Err(ClientError::InvalidConfig(format!(
                "retry_budget {} exceeds the maximum of 5",
                self.retry_budget
            )));
        }
        if self.timeout_secs == 0 {
            return Err(ClientError::InvalidConfig(
                "timeout_secs must be positive".to_string(),
            ));
        }
        Ok(())
    }
}

/// Rough token estimate when the backend reports no usage: character count
/// divided by four.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() / 4) as u64
}

/// Per-role call statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleStats {
    /// Completed `chat` invocations (successful or not).
    pub calls: u64,
    /// Transport attempts, including retries.
    pub attempts: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// Read-only view of a ledger at a point in time.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LedgerSnapshot {
    pub per_role: BTreeMap<String, RoleStats>,
    pub embed_calls: u64,
    pub embed_texts: u64,
    pub wall_seconds: f64,
}

impl LedgerSnapshot {
    pub fn role(&self, role: Role) -> RoleStats {
        self.per_role.get(role.name()).copied().unwrap_or_default()
    }

    pub fn total_chat_calls(&self) -> u64 {
        self.per_role.values().map(|s| s.calls).sum()
    }

    pub fn total_tokens(&self) -> u64 {
        self.per_role
            .values()
            .map(|s| s.prompt_tokens + s.completion_tokens)
            .sum()
    }
}

#[derive(Debug, Default)]
struct LedgerInner {
    per_role: BTreeMap<Role, RoleStats>,
    embed_calls: u64,
    embed_texts: u64,
    wall: Duration,
}

/// Thread-safe call accounting shared by client implementations.
#[derive(Debug, Default)]
pub struct CallLedger {
    inner: Mutex<LedgerInner>,
}

impl CallLedger {
    pub fn new() -> Self {
        CallLedger::default()
    }

    /// Record one completed `chat` invocation and the attempts it took.
    pub fn record_chat(
        &self,
        role: Role,
        attempts: u32,
        prompt_tokens: u64,
        completion_tokens: u64,
        wall: Duration,
    ) {
        let mut inner = self.inner.lock().expect("ledger lock poisoned");
        let stats = inner.per_role.entry(role).or_default();
        stats.calls += 1;
        stats.attempts += u64::from(attempts);
        stats.prompt_tokens += prompt_tokens;
        stats.completion_tokens += completion_tokens;
        inner.wall += wall;
    }

    pub fn record_embed(&self, texts: u64, wall: Duration) {
        let mut inner = self.inner.lock().expect("ledger lock poisoned");
        inner.embed_calls += 1;
        inner.embed_texts += texts;
        inner.wall += wall;
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        let inner = self.inner.lock().expect("ledger lock poisoned");
        LedgerSnapshot {
            per_role: inner
                .per_role
                .iter()
                .map(|(role, stats)| (role.name().to_string(), *stats))
                .collect(),
            embed_calls: inner.embed_calls,
            embed_texts: inner.embed_texts,
            wall_seconds: inner.wall.as_secs_f64(),
        }
    }
}

/// Abstract chat + embedding access.
///
/// Implementations must be safe for concurrent calls; the parallel evolution
/// schedule issues chat requests from multiple threads.
pub trait ModelClient: Send + Sync {
    fn chat(&self, request: &ChatRequest) -> Result<String, ClientError>;

    /// Embed each input text. Returns one vector per input; all vectors from
    /// one client have the same length.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ClientError>;

    fn vision_capable(&self) -> bool;

    fn ledger(&self) -> LedgerSnapshot;
}

/// Total chat attempts per structured request before giving up: the first
/// call plus two repair re-prompts.
pub const PARSE_ATTEMPTS: u32 = 3;

const REPAIR_HINT: &str = "Your previous response could not be parsed. \
Respond again following the required output format exactly.";

/// Outcome of [`chat_with_parse_retries`] when no attempt produced a
/// parseable response.
#[derive(Debug)]
pub enum ParseRetryError {
    /// Transport-level failure; callers treat this as fatal.
    Client(ClientError),
    /// Every attempt got a response, but none parsed.
    Unparseable {
        attempts: u32,
        reason: String,
        last_response: String,
    },
}

/// Issue a chat request and parse the response, re-prompting with a repair
/// hint appended on parse failure. Up to [`PARSE_ATTEMPTS`] attempts total.
pub fn chat_with_parse_retries<T>(
    client: &dyn ModelClient,
    request: &ChatRequest,
    parse: impl Fn(&str) -> Result<T, String>,
) -> Result<T, ParseRetryError> {
    let mut last_reason = String::new();
    let mut last_response = String::new();
    for attempt in 1..=PARSE_ATTEMPTS {
        let attempt_request = if attempt == 1 {
            request.clone()
        } else {
            let mut repaired = request.clone();
            repaired.parts.push(Part::Text(REPAIR_HINT.to_string()));
            repaired
        };
        let response = client
            .chat(&attempt_request)
            .map_err(ParseRetryError::Client)?;
        match parse(&response) {
            Ok(value) => return Ok(value),
            Err(reason) => {
                last_reason = reason;
                last_response = response;
            }
        }
    }
    Err(ParseRetryError::Unparseable {
        attempts: PARSE_ATTEMPTS,
        reason: last_reason,
        last_response,
    })
}

/// One logged model exchange: the role, the flattened prompt, and the raw
/// response (or an error marker).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub role: String,
    pub prompt: String,
    pub response: String,
}

/// Wraps a client and records every chat exchange, for execution traces.
pub struct RecordingClient<'a> {
    inner: &'a dyn ModelClient,
    log: Mutex<Vec<Exchange>>,
}

impl<'a> RecordingClient<'a> {
    pub fn new(inner: &'a dyn ModelClient) -> Self {
        RecordingClient {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn take_exchanges(&self) -> Vec<Exchange> {
        std::mem::take(&mut *self.log.lock().expect("exchange log lock poisoned"))
    }
}

impl ModelClient for RecordingClient<'_> {
    fn chat(&self, request: &ChatRequest) -> Result<String, ClientError> {
        let result = self.inner.chat(request);
        let response = match &result {
            Ok(text) => text.clone(),
            Err(err) => format!("[error: {err}]"),
        };
        self.log.lock().expect("exchange log lock poisoned").push(Exchange {
            role: request.role.name().to_string(),
            prompt: request.prompt_text(),
            response,
        });
        result
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ClientError> {
        self.inner.embed(texts)
    }

    fn vision_capable(&self) -> bool {
        self.inner.vision_capable()
    }

    fn ledger(&self) -> LedgerSnapshot {
        self.inner.ledger()
    }
}
