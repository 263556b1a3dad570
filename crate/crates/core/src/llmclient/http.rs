//! Chat-completion-style HTTP transport with retry/backoff.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::llmclient::{Backend, ChatRequest, EmbedRequest, Role, RoleConfig, TokenUsage};

const MAX_RETRIES: u32 = 3;
const INITIAL_BACKOFF_MS: u64 = 500;

pub struct HttpBackend {
    client: reqwest::blocking::Client,
    ops: AtomicU64,
    initial_backoff_ms: u64,
}

impl HttpBackend {
    pub fn new(timeout_secs: u64) -> Result<Self> {
        Self::with_backoff(timeout_secs, INITIAL_BACKOFF_MS)
    }

    pub fn with_backoff(timeout_secs: u64, initial_backoff_ms: u64) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(timeout_secs))
            .build()
            .map_err(|e| Error::Client {
                role: "transport".into(),
                detail: format!("failed to build http client: {e}"),
            })?;
        Ok(HttpBackend {
            client,
            ops: AtomicU64::new(0),
            initial_backoff_ms,
        })
    }

    fn bearer(&self, cfg: &RoleConfig) -> Option<String> {
        if cfg.api_key_env.is_empty() {
            return None;
        }
        std::env::var(&cfg.api_key_env).ok()
    }

    fn post_with_retries(
        &self,
        role: Role,
        cfg: &RoleConfig,
        url: &str,
        body: &serde_json::Value,
    ) -> Result<serde_json::Value> {
        let mut backoff = self.initial_backoff_ms;
        let mut attempts = Vec::new();
        for attempt in 0..=MAX_RETRIES {
            self.ops.fetch_add(1, Ordering::SeqCst);
            let mut request = self.client.post(url).json(body);
            if let Some(token) = self.bearer(cfg) {
                request = request.bearer_auth(token);
            }
            match request.send() {
                Ok(response) => {
                    let status = response.status();
                    if status.is_success() {
                        return response.json().map_err(|e| Error::Client {
                            role: role.to_string(),
                            detail: format!("malformed provider response: {e}"),
                        });
                    }
                    let retryable = status.as_u16() == 429 || status.is_server_error();
                    let body_text = response.text().unwrap_or_default();
                    attempts.push(format!("attempt {attempt}: HTTP {status}: {body_text}"));
                    if !retryable {
                        break;
                    }
                }
                Err(e) => attempts.push(format!("attempt {attempt}: {e}")),
            }
            if attempt < MAX_RETRIES {
                std::thread::sleep(Duration::from_millis(backoff));
                backoff *= 2;
            }
        }
        Err(Error::Client {
            role: role.to_string(),
            detail: format!("exhausted retries: [{}]", attempts.join("; ")),
        })
    }
}

fn endpoint_url(cfg: &RoleConfig, path: &str) -> String {
    format!("{}/{}", cfg.endpoint.trim_end_matches('/'), path)
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<ProviderUsage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedDatum>,
    #[serde(default)]
    usage: Option<ProviderUsage>,
}

#[derive(Deserialize)]
struct EmbedDatum {
    embedding: Vec<f64>,
}

#[derive(Deserialize)]
struct ProviderUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

/// bytes/4 heuristic, used only when a provider omits usage.
fn estimate_tokens(text: &str) -> u64 {
    (text.len() as u64).div_ceil(4)
}

impl Backend for HttpBackend {
    fn chat(&self, role: Role, cfg: &RoleConfig, req: &ChatRequest) -> Result<(String, TokenUsage)> {
        let mut messages = Vec::new();
        if let Some(system) = &req.system {
            messages.push(serde_json::json!({"role": "system", "content": system}));
        }
        messages.push(serde_json::json!({"role": "user", "content": req.user}));
        let mut body = serde_json::json!({
            "model": cfg.model,
            "messages": messages,
            "temperature": req.temperature,
            "top_p": req.top_p,
            "max_tokens": req.max_tokens,
        });
        for (key, value) in &req.extra {
            body[key] = value.clone();
        }
        let url = endpoint_url(cfg, "chat/completions");
        let value = self.post_with_retries(role, cfg, &url, &body)?;
        let parsed: ChatResponse = serde_json::from_value(value).map_err(|e| Error::Client {
            role: role.to_string(),
            detail: format!("unexpected chat response shape: {e}"),
        })?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| Error::Client {
                role: role.to_string(),
                detail: "provider returned no choices".into(),
            })?;
        let usage = match parsed.usage {
            Some(u) => TokenUsage::new(u.prompt_tokens, u.completion_tokens),
            None => TokenUsage {
                input_tokens: estimate_tokens(&req.user),
                output_tokens: estimate_tokens(&text),
                estimated: true,
            },
        };
        Ok((text, usage))
    }

    fn embed(&self, role: Role, cfg: &RoleConfig, req: &EmbedRequest) -> Result<(Vec<f64>, TokenUsage)> {
        let body = serde_json::json!({
            "model": cfg.model,
            "input": req.text,
        });
        let url = endpoint_url(cfg, "embeddings");
        let value = self.post_with_retries(role, cfg, &url, &body)?;
        let parsed: EmbedResponse = serde_json::from_value(value).map_err(|e| Error::Client {
            role: role.to_string(),
            detail: format!("unexpected embedding response shape: {e}"),
        })?;
        let vector = parsed
            .data
            .into_iter()
            .next()
            .map(|d| d.embedding)
            .ok_or_else(|| Error::Client {
                role: role.to_string(),
                detail: "provider returned no embedding".into(),
            })?;
        let usage = match parsed.usage {
            Some(u) => TokenUsage::new(u.prompt_tokens, u.completion_tokens),
            None => TokenUsage {
                input_tokens: estimate_tokens(&req.text),
                output_tokens: 0,
                estimated: true,
            },
        };
        Ok((vector, usage))
    }

    fn operations(&self) -> u64 {
        self.ops.load(Ordering::SeqCst)
    }
}
