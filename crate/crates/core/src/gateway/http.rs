//! Generic HTTP chat-completion backend.
//!
//! Request body: `{model, messages:[{role, content}], temperature, max_tokens[, seed]}`
//! posted to `<base_url>/chat/completions`. The reply is read from
//! `choices[0].message.content` and `usage.{prompt_tokens, completion_tokens}`.

use std::fmt;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use url::Url;

use super::{estimate_tokens, BackendError, BackendReply, ChatBackend, ChatRequest, Speaker};
use crate::domain::TokenUsage;

/// Environment variable holding the API key for a named backend:
/// `HYGIEIA_BACKEND_<NAME>_KEY`, with the name upper-cased and every
/// non-alphanumeric character replaced by `_`.
pub fn api_key_env_var(backend_name: &str) -> String {
    let name: String = backend_name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_uppercase() } else { '_' })
        .collect();
    format!("HYGIEIA_BACKEND_{name}_KEY")
}

pub struct HttpChatBackend {
    id: String,
    endpoint: Url,
    api_key: Option<String>,
    client: reqwest::Client,
}

impl fmt::Debug for HttpChatBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpChatBackend")
            .field("id", &self.id)
            .field("endpoint", &self.endpoint.as_str())
            .field("has_api_key", &self.api_key.is_some())
            .finish()
    }
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct WireResponse {
    #[serde(default)]
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireChoiceMessage,
}

#[derive(Deserialize)]
struct WireChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl HttpChatBackend {
    /// `api_key` is usually read with [`HttpChatBackend::from_env`].
    pub fn new(
        id: impl Into<String>,
        base_url: &Url,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Result<Self, BackendError> {
        let mut base = base_url.clone();
        if !base.path().ends_with('/') {
            base.set_path(&format!("{}/", base.path()));
        }
        let endpoint = base
            .join("chat/completions")
            .map_err(|e| BackendError::Protocol(format!("bad base url: {e}")))?;
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(Self {
            id: id.into(),
            endpoint,
            api_key,
            client,
        })
    }

    /// Reads the key from [`api_key_env_var`]`(id)` (or `key_env` when given).
    pub fn from_env(
        id: &str,
        base_url: &Url,
        key_env: Option<&str>,
        timeout: Duration,
    ) -> Result<Self, BackendError> {
        let var = key_env.map(str::to_string).unwrap_or_else(|| api_key_env_var(id));
        let key = std::env::var(&var).ok().filter(|k| !k.is_empty());
        Self::new(id, base_url, key, timeout)
    }

    pub fn endpoint(&self) -> &Url {
        &self.endpoint
    }
}

#[async_trait]
impl ChatBackend for HttpChatBackend {
    fn id(&self) -> &str {
        &self.id
    }

    async fn send(&self, model: &str, request: &ChatRequest) -> Result<BackendReply, BackendError> {
        let body = WireRequest {
            model,
            messages: request
                .messages
                .iter()
                .map(|m| WireMessage {
                    role: match m.speaker {
                        Speaker::System => "system",
                        Speaker::User => "user",
                        Speaker::Assistant => "assistant",
                    },
                    content: &m.text,
                })
                .collect(),
            temperature: request.temperature,
            max_tokens: request.max_tokens,
            seed: request.seed,
        };
        let mut call = self.client.post(self.endpoint.clone()).json(&body);
        if let Some(key) = &self.api_key {
            call = call.bearer_auth(key);
        }
        let resp = call
            .send()
            .await
            .map_err(|e| BackendError::Transport(e.without_url().to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .await
            .map_err(|e| BackendError::Transport(e.without_url().to_string()))?;
        if !status.is_success() {
            let body: String = text.chars().take(300).collect();
            return Err(BackendError::Status {
                code: status.as_u16(),
                body,
            });
        }
        let parsed: WireResponse =
            serde_json::from_str(&text).map_err(|e| BackendError::Protocol(e.to_string()))?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Protocol("response has no choices[0].message.content".into()))?;
        let usage = match parsed.usage {
            Some(u) => TokenUsage::new(u.prompt_tokens, u.completion_tokens),
            None => TokenUsage::new(estimate_tokens(&request.transcript()), estimate_tokens(&content)),
        };
        Ok(BackendReply {
            text: content,
            usage,
        })
    }
}
