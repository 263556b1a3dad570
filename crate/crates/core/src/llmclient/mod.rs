//! Unified client for every model role with live/record/replay modes,
//! retries, token accounting and cost estimation.

mod cost;
mod http;
mod store;

pub use cost::{estimate_cost, CostReport, RoleCost, UsageLedger};
pub use http::HttpBackend;
pub use store::ReplayStore;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, Condvar, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Model roles in the pipeline; each is bound to one provider endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    SubjectM1,
    SubjectM2,
    Hypothesizer,
    Discriminator,
    Summarizer,
    Judge,
    Embedder,
}

impl Role {
    pub const ALL: [Role; 7] = [
        Role::SubjectM1,
        Role::SubjectM2,
        Role::Hypothesizer,
        Role::Discriminator,
        Role::Summarizer,
        Role::Judge,
        Role::Embedder,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Role::SubjectM1 => "subject_m1",
            Role::SubjectM2 => "subject_m2",
            Role::Hypothesizer => "hypothesizer",
            Role::Discriminator => "discriminator",
            Role::Summarizer => "summarizer",
            Role::Judge => "judge",
            Role::Embedder => "embedder",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Token counts for one call or an aggregate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub input_tokens: u64,
    pub output_tokens: u64,
    /// Set when a provider omitted usage and the bytes/4 fallback was used.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub estimated: bool,
}

impl TokenUsage {
    pub fn new(input_tokens: u64, output_tokens: u64) -> Self {
        TokenUsage {
            input_tokens,
            output_tokens,
            estimated: false,
        }
    }

    pub fn add(&mut self, other: &TokenUsage) {
        self.input_tokens += other.input_tokens;
        self.output_tokens += other.output_tokens;
        self.estimated |= other.estimated;
    }
}

/// Binding of a role to a provider endpoint and its prices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoleConfig {
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token; empty for none.
    #[serde(default)]
    pub api_key_env: String,
    /// Price per million input tokens.
    #[serde(default)]
    pub price_in: f64,
    /// Price per million output tokens.
    #[serde(default)]
    pub price_out: f64,
}

/// Chat-completion request; one shape for every text role.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    pub user: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    /// Opaque provider-specific decoding fields, passed through verbatim.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, serde_json::Value>,
    /// Disambiguates repeated sampling of the same prompt in the fixture
    /// store; never transmitted to the provider.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonce: Option<String>,
}

impl ChatRequest {
    pub fn new(user: impl Into<String>) -> Self {
        ChatRequest {
            system: None,
            user: user.into(),
            temperature: 1.0,
            top_p: 0.95,
            max_tokens: 112,
            extra: BTreeMap::new(),
            nonce: None,
        }
    }

    pub fn with_nonce(mut self, nonce: impl Into<String>) -> Self {
        self.nonce = Some(nonce.into());
        self
    }
}

/// Embedding request.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonce: Option<String>,
}

/// Response payload of a call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseBody {
    Text(String),
    Vector(Vec<f64>),
}

/// One persisted call: canonical request, response and usage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CallRecord {
    pub call_key: String,
    pub role: Role,
    pub request: serde_json::Value,
    pub response: ResponseBody,
    pub usage: TokenUsage,
    pub timestamp: String,
}

/// Canonical serialization: JSON with object keys sorted (serde_json maps
/// are BTreeMaps) and prompt bytes untouched.
pub fn canonical_request(role: Role, payload: &serde_json::Value) -> String {
    let wrapper = serde_json::json!({ "role": role, "payload": payload });
    serde_json::to_string(&wrapper).expect("canonical payload serializes")
}

/// Content address of a call: SHA-256 of the canonical request.
pub fn call_key(role: Role, payload: &serde_json::Value) -> String {
    use sha2::{Digest, Sha256};
    let canonical = canonical_request(role, payload);
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Transport behind the client. Implementations must be deterministic in
/// mock settings; the HTTP implementation retries transient failures.
pub trait Backend: Send + Sync {
    fn chat(&self, role: Role, cfg: &RoleConfig, req: &ChatRequest) -> Result<(String, TokenUsage)>;
    fn embed(&self, role: Role, cfg: &RoleConfig, req: &EmbedRequest)
        -> Result<(Vec<f64>, TokenUsage)>;
    /// Number of transport-level operations performed so far.
    fn operations(&self) -> u64;
}

/// Execution mode: where responses come from and whether they are persisted.
pub enum CallMode {
    /// Call the backend; nothing persisted.
    Live,
    /// Call the backend and persist every call to the store.
    Record(ReplayStore),
    /// Serve every call from the store; a miss is a hard error.
    Replay(ReplayStore),
}

impl CallMode {
    pub fn name(&self) -> &'static str {
        match self {
            CallMode::Live => "live",
            CallMode::Record(_) => "record",
            CallMode::Replay(_) => "replay",
        }
    }
}

/// Counting semaphore bounding in-flight backend calls.
struct Semaphore {
    permits: Mutex<usize>,
    available: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Semaphore {
            permits: Mutex::new(permits.max(1)),
            available: Condvar::new(),
        }
    }

    fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        let mut permits = self.permits.lock().expect("semaphore poisoned");
        while *permits == 0 {
            permits = self.available.wait(permits).expect("semaphore poisoned");
        }
        *permits -= 1;
        drop(permits);

        struct Release<'a>(&'a Semaphore);
        impl Drop for Release<'_> {
            fn drop(&mut self) {
                *self.0.permits.lock().expect("semaphore poisoned") += 1;
                self.0.available.notify_one();
            }
        }
        let _release = Release(self);
        f()
    }
}

/// Client shared by every stage; cheap to clone.
#[derive(Clone)]
pub struct LlmClient {
    inner: Arc<ClientInner>,
}

struct ClientInner {
    roles: BTreeMap<Role, RoleConfig>,
    backend: Arc<dyn Backend>,
    mode: CallMode,
    semaphore: Semaphore,
    usage: Mutex<UsageLedger>,
}

impl LlmClient {
    pub fn new(
        roles: BTreeMap<Role, RoleConfig>,
        backend: Arc<dyn Backend>,
        mode: CallMode,
        max_in_flight: usize,
    ) -> Self {
        LlmClient {
            inner: Arc::new(ClientInner {
                roles,
                backend,
                mode,
                semaphore: Semaphore::new(max_in_flight),
                usage: Mutex::new(UsageLedger::default()),
            }),
        }
    }

    pub fn role_config(&self, role: Role) -> Result<&RoleConfig> {
        self.inner.roles.get(&role).ok_or_else(|| Error::Config(format!(
            "role {role} is not bound to a model endpoint"
        )))
    }

    pub fn mode_name(&self) -> &'static str {
        self.inner.mode.name()
    }

    /// Transport operations performed by the underlying backend.
    pub fn backend_operations(&self) -> u64 {
        self.inner.backend.operations()
    }

    /// Cumulative per-(role, stage) token usage observed by this client.
    pub fn usage_ledger(&self) -> UsageLedger {
        self.inner.usage.lock().expect("usage ledger poisoned").clone()
    }

    fn note_usage(&self, role: Role, stage: &str, usage: TokenUsage) {
        self.inner
            .usage
            .lock()
            .expect("usage ledger poisoned")
            .record(role, stage, usage);
    }

    /// Chat completion for `role`, attributed to `stage` in the usage ledger.
    pub fn complete(&self, role: Role, stage: &str, req: &ChatRequest) -> Result<(String, TokenUsage)> {
        let cfg = self.role_config(role)?;
        let payload = serde_json::to_value(req).expect("request serializes");
        let key = call_key(role, &payload);

        let (text, usage) = match &self.inner.mode {
            CallMode::Replay(store) => {
                let record = store.get(&key)?.ok_or_else(|| Error::ReplayMiss {
                    role: role.to_string(),
                    call_key: key.clone(),
                })?;
                match record.response {
                    ResponseBody::Text(text) => (text, record.usage),
                    ResponseBody::Vector(_) => {
                        return Err(Error::Inconsistent(format!(
                            "fixture {key} holds a vector but a completion was requested"
                        )))
                    }
                }
            }
            CallMode::Live => self
                .inner
                .semaphore
                .run(|| self.inner.backend.chat(role, cfg, req))?,
            CallMode::Record(store) => {
                let (text, usage) = self
                    .inner
                    .semaphore
                    .run(|| self.inner.backend.chat(role, cfg, req))?;
                store.put(&CallRecord {
                    call_key: key.clone(),
                    role,
                    request: payload,
                    response: ResponseBody::Text(text.clone()),
                    usage,
                    timestamp: store.next_timestamp(),
                })?;
                (text, usage)
            }
        };
        self.note_usage(role, stage, usage);
        Ok((text, usage))
    }

    /// Embedding for `role`.
    pub fn embed(&self, role: Role, stage: &str, req: &EmbedRequest) -> Result<(Vec<f64>, TokenUsage)> {
        let cfg = self.role_config(role)?;
        let payload = serde_json::to_value(req).expect("request serializes");
        let key = call_key(role, &payload);

        let (vector, usage) = match &self.inner.mode {
            CallMode::Replay(store) => {
                let record = store.get(&key)?.ok_or_else(|| Error::ReplayMiss {
                    role: role.to_string(),
                    call_key: key.clone(),
                })?;
                match record.response {
                    ResponseBody::Vector(v) => (v, record.usage),
                    ResponseBody::Text(_) => {
                        return Err(Error::Inconsistent(format!(
                            "fixture {key} holds text but an embedding was requested"
                        )))
                    }
                }
            }
            CallMode::Live => self
                .inner
                .semaphore
                .run(|| self.inner.backend.embed(role, cfg, req))?,
            CallMode::Record(store) => {
                let (vector, usage) = self
                    .inner
                    .semaphore
                    .run(|| self.inner.backend.embed(role, cfg, req))?;
                store.put(&CallRecord {
                    call_key: key.clone(),
                    role,
                    request: payload,
                    response: ResponseBody::Vector(vector.clone()),
                    usage,
                    timestamp: store.next_timestamp(),
                })?;
                (vector, usage)
            }
        };
        self.note_usage(role, stage, usage);
        Ok((vector, usage))
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use std::sync::atomic::{AtomicU64, Ordering};

    /// Scripted backend: echoes a fixed reply and counts operations.
    pub struct StubBackend {
        pub reply: String,
        pub ops: AtomicU64,
    }

    impl StubBackend {
        pub fn new(reply: &str) -> Self {
            StubBackend {
                reply: reply.to_string(),
                ops: AtomicU64::new(0),
            }
        }
    }

    impl Backend for StubBackend {
        fn chat(&self, _role: Role, _cfg: &RoleConfig, req: &ChatRequest) -> Result<(String, TokenUsage)> {
            self.ops.fetch_add(1, Ordering::SeqCst);
            Ok((
                self.reply.clone(),
                TokenUsage::new(req.user.len() as u64 / 4, self.reply.len() as u64 / 4),
            ))
        }

        fn embed(&self, _role: Role, _cfg: &RoleConfig, req: &EmbedRequest) -> Result<(Vec<f64>, TokenUsage)> {
            self.ops.fetch_add(1, Ordering::SeqCst);
            Ok((
                vec![req.text.len() as f64, 1.0],
                TokenUsage::new(req.text.len() as u64 / 4, 0),
            ))
        }

        fn operations(&self) -> u64 {
            self.ops.load(Ordering::SeqCst)
        }
    }

    pub fn single_role(role: Role) -> BTreeMap<Role, RoleConfig> {
        let mut roles = BTreeMap::new();
        roles.insert(
            role,
            RoleConfig {
                endpoint: "http://unused".into(),
                model: "stub".into(),
                api_key_env: String::new(),
                price_in: 1.0,
                price_out: 2.0,
            },
        );
        roles
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;

    #[test]
    fn call_key_stable_and_sensitive() {
        let req = ChatRequest::new("hello");
        let payload = serde_json::to_value(&req).unwrap();
        let k1 = call_key(Role::Hypothesizer, &payload);
        let k2 = call_key(Role::Hypothesizer, &payload);
        assert_eq!(k1, k2);
        let other = serde_json::to_value(ChatRequest::new("hello!")).unwrap();
        assert_ne!(k1, call_key(Role::Hypothesizer, &other));
        assert_ne!(k1, call_key(Role::Discriminator, &payload));
    }

    #[test]
    fn record_then_replay_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let store = ReplayStore::open(dir.path()).unwrap();
        let backend = Arc::new(StubBackend::new("recorded reply"));
        let client = LlmClient::new(
            single_role(Role::Hypothesizer),
            backend,
            CallMode::Record(store),
            4,
        );
        let req = ChatRequest::new("payload").with_nonce("s0");
        let (text, usage) = client.complete(Role::Hypothesizer, "stage", &req).unwrap();

        let replay_store = ReplayStore::open(dir.path()).unwrap();
        let stub = Arc::new(StubBackend::new("should never be called"));
        let replay = LlmClient::new(
            single_role(Role::Hypothesizer),
            stub.clone(),
            CallMode::Replay(replay_store),
            4,
        );
        let (text2, usage2) = replay.complete(Role::Hypothesizer, "stage", &req).unwrap();
        assert_eq!(text, text2);
        assert_eq!(usage, usage2);
        assert_eq!(stub.operations(), 0, "replay must not touch the transport");
    }

    #[test]
    fn replay_miss_is_hard_error() {
        let dir = tempfile::tempdir().unwrap();
        let store = ReplayStore::open(dir.path()).unwrap();
        let client = LlmClient::new(
            single_role(Role::Judge),
            Arc::new(StubBackend::new("x")),
            CallMode::Replay(store),
            4,
        );
        let err = client
            .complete(Role::Judge, "stage", &ChatRequest::new("never recorded"))
            .unwrap_err();
        assert!(matches!(err, Error::ReplayMiss { .. }));
    }

    #[test]
    fn nonce_distinguishes_identical_prompts() {
        let a = serde_json::to_value(ChatRequest::new("same").with_nonce("0")).unwrap();
        let b = serde_json::to_value(ChatRequest::new("same").with_nonce("1")).unwrap();
        assert_ne!(call_key(Role::SubjectM1, &a), call_key(Role::SubjectM1, &b));
    }

    #[test]
    fn usage_ledger_accumulates() {
        let client = LlmClient::new(
            single_role(Role::Discriminator),
            Arc::new(StubBackend::new("0123456789abcdef")),
            CallMode::Live,
            2,
        );
        for i in 0..3 {
            let req = ChatRequest::new("x".repeat(40)).with_nonce(i.to_string());
            client.complete(Role::Discriminator, "judging", &req).unwrap();
        }
        let ledger = client.usage_ledger();
        let total = ledger.total_for_role(Role::Discriminator);
        assert_eq!(total.input_tokens, 30);
        assert_eq!(total.output_tokens, 12);
    }
}
