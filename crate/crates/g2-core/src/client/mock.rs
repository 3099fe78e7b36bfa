//! Deterministic scripted model client.
//!
//! Every offline test and the CLI's `--mock-script` mode run against this
//! client. Chat responses are scripted per role and consumed in call order;
//! when a role's queue runs out, the last entry repeats. Embeddings are
//! hash-seeded pseudo-random unit vectors: the seed and the input text are
//! fed through SHA-256, the first eight digest bytes seed an RNG, and the
//! sampled vector is normalized. Equal texts therefore always embed
//! identically, across runs and platforms.
//!
//! Parallel callers share the per-role queues; with distinct scripted
//! entries the assignment of responses to callers follows lock order, so
//! tests that need per-node responses should use the sequential schedule.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{estimate_tokens, CallLedger, ChatRequest, ClientError, LedgerSnapshot, ModelClient, Role};

/// One scripted chat outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptedOutcome {
    Respond(String),
    Failure { error: ScriptedFailure },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScriptedFailure {
    Transient,
    Auth,
}

fn default_dim() -> usize {
    8
}

fn default_retry_budget() -> u32 {
    1
}

/// On-disk script format for `--mock-script`. Role keys are the lowercase
/// role names (`initializer`, `evolver`, `decomposer`, `worker`, `checker`,
/// `reasoner`, `judge`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_dim")]
    pub embedding_dim: usize,
    #[serde(default)]
    pub vision_capable: bool,
    #[serde(default = "default_retry_budget")]
    pub retry_budget: u32,
    #[serde(default)]
    pub responses: BTreeMap<String, Vec<ScriptedOutcome>>,
}

impl MockScript {
    pub fn from_file(path: &Path) -> Result<MockScript, ClientError> {
        let raw = std::fs::read_to_string(path).map_err(|err| {
            ClientError::InvalidConfig(format!("cannot read mock script {}: {err}", path.display()))
        })?;
        serde_json::from_str(&raw).map_err(|err| {
            ClientError::InvalidConfig(format!("malformed mock script {}: {err}", path.display()))
        })
    }
}

#[derive(Debug, Default)]
struct RoleQueue {
    outcomes: Vec<ScriptedOutcome>,
    next: usize,
}

impl RoleQueue {
    /// Take the next outcome; the last entry repeats once the queue is
    /// exhausted.
    fn pop(&mut self) -> Option<ScriptedOutcome> {
        if self.outcomes.is_empty() {
            return None;
        }
        let outcome = self.outcomes[self.next].clone();
        if self.next + 1 < self.outcomes.len() {
            self.next += 1;
        }
        Some(outcome)
    }
}

/// Scripted, fully deterministic [`ModelClient`].
pub struct MockClient {
    seed: u64,
    dim: usize,
    vision: bool,
    retry_budget: u32,
    queues: Mutex<BTreeMap<Role, RoleQueue>>,
    ledger: CallLedger,
}

impl MockClient {
    pub fn builder(embedding_dim: usize) -> MockClientBuilder {
        MockClientBuilder {
            seed: 0,
            dim: embedding_dim,
            vision: false,
            retry_budget: 1,
            queues: BTreeMap::new(),
        }
    }

    pub fn from_script(script: MockScript) -> Result<MockClient, ClientError> {
        let mut builder = MockClient::builder(script.embedding_dim)
            .seed(script.seed)
            .vision(script.vision_capable)
            .retry_budget(script.retry_budget);
        for (role_name, outcomes) in script.responses {
            let role = Role::from_name(&role_name).ok_or_else(|| {
                ClientError::InvalidConfig(format!("unknown role in mock script: {role_name}"))
            })?;
            for outcome in outcomes {
                builder = builder.push(role, outcome);
            }
        }
        builder.try_build()
    }

    pub fn from_script_file(path: &Path) -> Result<MockClient, ClientError> {
        MockClient::from_script(MockScript::from_file(path)?)
    }

    pub fn embedding_dim(&self) -> usize {
        self.dim
    }

    /// The documented embedding scheme, exposed so tests can precompute
    /// expected vectors.
    pub fn hash_embedding(seed: u64, text: &str, dim: usize) -> Vec<f64> {
        let mut hasher = Sha256::new();
        hasher.update(seed.to_le_bytes());
        hasher.update(text.as_bytes());
        let digest = hasher.finalize();
        let mut key = [0u8; 8];
        key.copy_from_slice(&digest[..8]);
        let mut rng = StdRng::seed_from_u64(u64::from_le_bytes(key));
        let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in &mut v {
                *x /= norm;
            }
        }
        v
    }

    fn pop(&self, role: Role) -> Option<ScriptedOutcome> {
        self.queues
            .lock()
            .expect("mock queue lock poisoned")
            .get_mut(&role)
            .and_then(RoleQueue::pop)
    }
}

impl ModelClient for MockClient {
    fn chat(&self, request: &ChatRequest) -> Result<String, ClientError> {
        let started = Instant::now();
        let prompt_tokens = estimate_tokens(&request.prompt_text());
        let max_attempts = self.retry_budget + 1;
        let mut attempts = 0u32;
        let result = loop {
            attempts += 1;
            match self.pop(request.role) {
                None => {
                    break Err(ClientError::ModelUnavailable {
                        attempts,
                        reason: format!("no scripted response for role {}", request.role),
                    })
                }
                Some(ScriptedOutcome::Respond(text)) => break Ok(text),
                Some(ScriptedOutcome::Failure { error: ScriptedFailure::Auth }) => {
                    break Err(ClientError::AuthFailure("scripted auth failure".to_string()))
                }
                Some(ScriptedOutcome::Failure { error: ScriptedFailure::Transient }) => {
                    if attempts >= max_attempts {
                        break Err(ClientError::ModelUnavailable {
                            attempts,
                            reason: "scripted transient failure".to_string(),
                        });
                    }
                }
            }
        };
        let completion_tokens = result.as_ref().map(|t| estimate_tokens(t)).unwrap_or(0);
        self.ledger.record_chat(
            request.role,
            attempts,
            prompt_tokens * u64::from(attempts),
            completion_tokens,
            started.elapsed(),
        );
        result
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ClientError> {
        let started = Instant::now();
        let vectors = texts
            .iter()
            .map(|t| MockClient::hash_embedding(self.seed, t, self.dim))
            .collect();
        self.ledger.record_embed(texts.len() as u64, started.elapsed());
        Ok(vectors)
    }

    fn vision_capable(&self) -> bool {
        self.vision
    }

    fn ledger(&self) -> LedgerSnapshot {
        self.ledger.snapshot()
    }
}

/// Builder for in-code mock scripts.
pub struct MockClientBuilder {
    seed: u64,
    dim: usize,
    vision: bool,
    retry_budget: u32,
    queues: BTreeMap<Role, Vec<ScriptedOutcome>>,
}

impl MockClientBuilder {
    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn vision(mut self, vision: bool) -> Self {
        self.vision = vision;
        self
    }

    pub fn retry_budget(mut self, budget: u32) -> Self {
        self.retry_budget = budget;
        self
    }

    pub fn respond(self, role: Role, text: impl Into<String>) -> Self {
        self.push(role, ScriptedOutcome::Respond(text.into()))
    }

    pub fn fail_transient(self, role: Role) -> Self {
        self.push(role, ScriptedOutcome::Failure { error: ScriptedFailure::Transient })
    }

    pub fn fail_auth(self, role: Role) -> Self {
        self.push(role, ScriptedOutcome::Failure { error: ScriptedFailure::Auth })
    }

    fn push(mut self, role: Role, outcome: ScriptedOutcome) -> Self {
        self.queues.entry(role).or_default().push(outcome);
        self
    }

    fn try_build(self) -> Result<MockClient, ClientError> {
        if self.retry_budget > 5 {
            return Err(ClientError::InvalidConfig(format!(
                "retry_budget {} exceeds the maximum of 5",
                self.retry_budget
            )));
        }
        if self.dim == 0 {
            return Err(ClientError::InvalidConfig(
                "embedding_dim must be positive".to_string(),
            ));
        }
        Ok(MockClient {
            seed: self.seed,
            dim: self.dim,
            vision: self.vision,
            retry_budget: self.retry_budget,
            queues: Mutex::new(
                self.queues
                    .into_iter()
                    .map(|(role, outcomes)| (role, RoleQueue { outcomes, next: 0 }))
                    .collect(),
            ),
            ledger: CallLedger::new(),
        })
    }

    pub fn build(self) -> MockClient {
        self.try_build().expect("valid mock configuration")
    }
}
