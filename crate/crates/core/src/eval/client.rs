//! Blocking chat-completions client with exponential backoff.

use std::thread;
use std::time::Duration;

use log::warn;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::QueryError;

pub const API_KEY_ENV: &str = "FALLACY_FORGE_API_KEY";
pub const DEFAULT_SYSTEM_PROMPT: &str = "You answer questions about whether statements are correct.";

/// How prompts are delivered to an endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApiStyle {
    /// `POST {base_url}/v1/chat/completions` with a system and a user message.
    #[default]
    Chat,
    /// `POST {base_url}/v1/completions` with the prompt as plain text, for
    /// base models without a chat interface.
    Completion,
}

fn default_max_retries() -> u32 {
    3
}
fn default_timeout() -> f64 {
    60.0
}
fn default_backoff_ms() -> u64 {
    500
}
fn default_max_tokens() -> u32 {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEndpoint {
    pub name: String,
    pub base_url: String,
    pub model_id: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// Per-request timeout in seconds.
    #[serde(default = "default_timeout")]
    pub timeout: f64,
    #[serde(default)]
    pub api: ApiStyle,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_prompt: Option<String>,
    /// First backoff delay; doubles on every retry.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    /// Only used on the completion path.
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

impl ModelEndpoint {
    pub fn new(name: impl Into<String>, base_url: impl Into<String>, model_id: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            base_url: base_url.into(),
            model_id: model_id.into(),
            temperature: 0.0,
            max_retries: default_max_retries(),
            timeout: default_timeout(),
            api: ApiStyle::Chat,
            system_prompt: None,
            backoff_ms: default_backoff_ms(),
            max_tokens: default_max_tokens(),
        }
    }

    pub fn url(&self) -> String {
        let root = self.base_url.trim_end_matches('/');
        match self.api {
            ApiStyle::Chat => format!("{root}/v1/chat/completions"),
            ApiStyle::Completion => format!("{root}/v1/completions"),
        }
    }

    pub fn request_body(&self, prompt: &str) -> Value {
        match self.api {
            ApiStyle::Chat => json!({
                "model": self.model_id,
                "messages": [
                    {
                        "role": "system",
                        "content": self.system_prompt.as_deref().unwrap_or(DEFAULT_SYSTEM_PROMPT),
                    },
                    {"role": "user", "content": prompt},
                ],
                "temperature": self.temperature,
            }),
            ApiStyle::Completion => json!({
                "model": self.model_id,
                "prompt": prompt,
                "temperature": self.temperature,
                "max_tokens": self.max_tokens,
            }),
        }
    }

    pub(crate) fn backoff(&self, retry: u32) -> Duration {
        let factor = 1u64 << retry.min(16);
        Duration::from_millis(self.backoff_ms.saturating_mul(factor))
    }
}

/// A model's raw reply plus the number of HTTP attempts it took.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub content: String,
    pub attempts: u32,
}

/// Anything that can answer a prompt on behalf of an endpoint.
pub trait Transport: Sync {
    fn query(&self, endpoint: &ModelEndpoint, prompt: &str) -> Result<Reply, QueryError>;
}

/// Pull the reply text out of a response body.
pub fn extract_content(api: ApiStyle, body: &Value) -> Result<String, QueryError> {
    let choice = body
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| QueryError::Protocol("response has no choices[0]".into()))?;
    let content = match api {
        ApiStyle::Chat => choice.get("message").and_then(|m| m.get("content")),
        ApiStyle::Completion => choice.get("text"),
    };
    content
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| QueryError::Protocol("choices[0] carries no text content".into()))
}

#[derive(Debug, Clone)]
pub struct HttpTransport {
    client: Client,
    api_key: Option<String>,
}

impl HttpTransport {
    /// Reads the bearer token from `FALLACY_FORGE_API_KEY` when set.
    pub fn from_env() -> Self {
        Self::with_api_key(std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()))
    }

    pub fn with_api_key(api_key: Option<String>) -> Self {
        Self {
            client: Client::new(),
            api_key,
        }
    }
}

enum Attempt {
    Done(String),
    Retry(String),
    Fatal(QueryError),
}

impl HttpTransport {
    fn attempt(&self, endpoint: &ModelEndpoint, body: &Value) -> Attempt {
        let mut request = self
            .client
            .post(endpoint.url())
            .timeout(Duration::from_secs_f64(endpoint.timeout.max(0.001)))
            .json(body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = match request.send() {
            Ok(r) => r,
            Err(e) if e.is_builder() => return Attempt::Fatal(QueryError::Protocol(e.to_string())),
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = response.status();
        if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
            return Attempt::Fatal(QueryError::Auth {
                status: status.as_u16(),
            });
        }
        if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
            return Attempt::Retry(format!("HTTP {status}"));
        }
        if !status.is_success() {
            return Attempt::Fatal(QueryError::Protocol(format!("unexpected HTTP {status}")));
        }
        let text = match response.text() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let parsed: Value = match serde_json::from_str(&text) {
            Ok(v) => v,
            Err(e) => return Attempt::Fatal(QueryError::Protocol(format!("malformed body: {e}"))),
        };
        match extract_content(endpoint.api, &parsed) {
            Ok(content) => Attempt::Done(content),
            Err(e) => Attempt::Fatal(e),
        }
    }
}

impl Transport for HttpTransport {
    fn query(&self, endpoint: &ModelEndpoint, prompt: &str) -> Result<Reply, QueryError> {
        let body = endpoint.request_body(prompt);
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(endpoint, &body) {
                Attempt::Done(content) => return Ok(Reply { content, attempts }),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(message) => {
                    if attempts > endpoint.max_retries {
                        return Err(QueryError::Transport { attempts, message });
                    }
                    let delay = endpoint.backoff(attempts - 1);
                    warn!(
                        "{}: attempt {attempts} failed ({message}), retrying in {delay:?}",
                        endpoint.name
                    );
                    thread::sleep(delay);
                }
            }
        }
    }
}

/// Send one prompt to an endpoint over HTTP and return the first choice's
/// text.
pub fn query_model(endpoint: &ModelEndpoint, prompt: &str) -> Result<Reply, QueryError> {
    HttpTransport::from_env().query(endpoint, prompt)
}
