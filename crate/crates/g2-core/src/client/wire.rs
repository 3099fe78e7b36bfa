//! OpenAI-compatible wire client: `/chat/completions` and `/embeddings`.
//!
//! Transient failures (timeouts, connection errors, HTTP 429 and 5xx) are
//! retried with exponential backoff up to the configured budget. 401/403
//! responses fail immediately as authentication errors.

use std::path::Path;
use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{
    estimate_tokens, CallLedger, ChatRequest, ClientConfig, ClientError, LedgerSnapshot,
    ModelClient, Part,
};

const BACKOFF_BASE_MS: u64 = 250;

pub struct WireClient {
    config: ClientConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
    ledger: CallLedger,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Debug, Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Debug, Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

#[derive(Debug, Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingRow>,
}

#[derive(Debug, Deserialize)]
struct EmbeddingRow {
    index: usize,
    embedding: Vec<f64>,
}

enum AttemptError {
    Transient(String),
    Auth(String),
    Fatal(String),
}

impl WireClient {
    pub fn new(config: ClientConfig) -> Result<WireClient, ClientError> {
        config.validate()?;
        let agent_config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build();
        let api_key = std::env::var(&config.api_key_env).ok();
        Ok(WireClient {
            agent: agent_config.into(),
            config,
            api_key,
            ledger: CallLedger::new(),
        })
    }

    fn endpoint(&self, suffix: &str) -> String {
        format!("{}/{}", self.config.base_url.trim_end_matches('/'), suffix)
    }

    fn post(&self, url: &str, body: &Value) -> Result<Value, AttemptError> {
        let mut request = self.agent.post(url).header("content-type", "application/json");
        if let Some(key) = &self.api_key {
            request = request.header("authorization", &format!("Bearer {key}"));
        }
        let mut response = match request.send_json(body) {
            Ok(response) => response,
            Err(ureq::Error::Timeout(t)) => return Err(AttemptError::Transient(format!("timeout: {t}"))),
            Err(ureq::Error::Io(err)) => return Err(AttemptError::Transient(format!("i/o: {err}"))),
            Err(ureq::Error::ConnectionFailed) => {
                return Err(AttemptError::Transient("connection failed".to_string()))
            }
            Err(err) => return Err(AttemptError::Fatal(err.to_string())),
        };
        let status = response.status().as_u16();
        if status == 401 || status == 403 {
            return Err(AttemptError::Auth(format!("http {status}")));
        }
        if status == 429 || status >= 500 {
            return Err(AttemptError::Transient(format!("http {status}")));
        }
        if status >= 400 {
            let detail = response
                .body_mut()
                .read_to_string()
                .unwrap_or_default();
            return Err(AttemptError::Fatal(format!("http {status}: {detail}")));
        }
        response
            .body_mut()
            .read_json::<Value>()
            .map_err(|err| AttemptError::Fatal(format!("bad response body: {err}")))
    }

    /// Retry loop over one request: `retry_budget` retries after the first
    /// attempt, exponential backoff between transient failures.
    fn post_with_retries(&self, url: &str, body: &Value) -> Result<(Value, u32), ClientError> {
        let max_attempts = self.config.retry_budget + 1;
        let mut attempts = 0u32;
        loop {
            attempts += 1;
            match self.post(url, body) {
                Ok(value) => return Ok((value, attempts)),
                Err(AttemptError::Auth(reason)) => return Err(ClientError::AuthFailure(reason)),
                Err(AttemptError::Fatal(reason)) => {
                    return Err(ClientError::ModelUnavailable { attempts, reason })
                }
                Err(AttemptError::Transient(reason)) => {
                    if attempts >= max_attempts {
                        return Err(ClientError::ModelUnavailable { attempts, reason });
                    }
                    let backoff = BACKOFF_BASE_MS * (1 << (attempts - 1).min(6));
                    std::thread::sleep(Duration::from_millis(backoff));
                }
            }
        }
    }

    fn message_content(&self, request: &ChatRequest) -> Value {
        if !request.has_images() {
            return Value::String(request.prompt_text());
        }
        let parts: Vec<Value> = request
            .parts
            .iter()
            .map(|part| match part {
                Part::Text(text) => json!({"type": "text", "text": text}),
                Part::Image(path) => json!({
                    "type": "image_url",
                    "image_url": {"url": data_url(path)}
                }),
            })
            .collect();
        Value::Array(parts)
    }
}

fn data_url(path: &Path) -> String {
    let mime = match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .as_deref()
    {
        Some("jpg") | Some("jpeg") => "image/jpeg",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        _ => "image/png",
    };
    let bytes = std::fs::read(path).unwrap_or_default();
    format!("data:{mime};base64,{}", BASE64.encode(bytes))
}

impl ModelClient for WireClient {
    fn chat(&self, request: &ChatRequest) -> Result<String, ClientError> {
        let started = Instant::now();
        let prompt_tokens_estimate = estimate_tokens(&request.prompt_text());
        let mut body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": self.message_content(request)}],
            "temperature": request.temperature,
        });
        if let Some(max) = request.max_tokens {
            body["max_tokens"] = json!(max);
        }
        let result = self.post_with_retries(&self.endpoint("chat/completions"), &body);
        let (value, attempts) = match result {
            Ok(pair) => pair,
            Err(err) => {
                let attempts = match &err {
                    ClientError::ModelUnavailable { attempts, .. } => *attempts,
                    _ => 1,
                };
                self.ledger.record_chat(
                    request.role,
                    attempts,
                    prompt_tokens_estimate * u64::from(attempts),
                    0,
                    started.elapsed(),
                );
                return Err(err);
            }
        };
        let parsed: ChatResponse = serde_json::from_value(value).map_err(|err| {
            ClientError::ModelUnavailable {
                attempts,
                reason: format!("unexpected chat response shape: {err}"),
            }
        })?;
        let text = parsed
            .choices
            .first()
            .and_then(|c| c.message.content.clone())
            .ok_or_else(|| ClientError::ModelUnavailable {
                attempts,
                reason: "chat response had no content".to_string(),
            })?;
        let (prompt_tokens, completion_tokens) = match parsed.usage {
            Some(usage) => (usage.prompt_tokens, usage.completion_tokens),
            None => (
                prompt_tokens_estimate * u64::from(attempts),
                estimate_tokens(&text),
            ),
        };
        self.ledger.record_chat(
            request.role,
            attempts,
            prompt_tokens,
            completion_tokens,
            started.elapsed(),
        );
        Ok(text)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ClientError> {
        let started = Instant::now();
        let body = json!({
            "model": self.config.embedding_model,
            "input": texts,
        });
        let (value, attempts) = self.post_with_retries(&self.endpoint("embeddings"), &body)?;
        let parsed: EmbeddingResponse =
            serde_json::from_value(value).map_err(|err| ClientError::ModelUnavailable {
                attempts,
                reason: format!("unexpected embedding response shape: {err}"),
            })?;
        let mut rows = parsed.data;
        rows.sort_by_key(|row| row.index);
        if rows.len() != texts.len() {
            return Err(ClientError::ModelUnavailable {
                attempts,
                reason: format!(
                    "embedding response had {} rows for {} inputs",
                    rows.len(),
                    texts.len()
                ),
            });
        }
        self.ledger.record_embed(texts.len() as u64, started.elapsed());
        Ok(rows.into_iter().map(|row| row.embedding).collect())
    }

    fn vision_capable(&self) -> bool {
        self.config.vision_capable
    }

    fn ledger(&self) -> LedgerSnapshot {
        self.ledger.snapshot()
    }
}
