//! Uniform completion interface over live chat providers and the scripted
//! backend, with per-role routing, retries and token metering.

mod backend;
mod http;
mod metering;
mod scripted;

pub use backend::{BackendError, BackendReply, ChatBackend, RetryPolicy};
pub use http::{api_key_env_var, HttpChatBackend};
pub use metering::{RoleUsage, UsageReport};
pub use scripted::{Script, ScriptEntry, ScriptedBackend, ScriptedFailure, Times};

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{ReasoningTrace, Stage, TokenUsage};
use metering::Meter;

/// The model-backed agents of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    #[serde(alias = "Router")]
    Router,
    #[serde(alias = "KnowledgeExtractor")]
    KnowledgeExtractor,
    #[serde(alias = "KnowledgeManager")]
    KnowledgeManager,
    #[serde(alias = "Summary")]
    Summary,
    #[serde(alias = "Verifier")]
    Verifier,
}

impl AgentRole {
    pub const ALL: [AgentRole; 5] = [
        AgentRole::Router,
        AgentRole::KnowledgeExtractor,
        AgentRole::KnowledgeManager,
        AgentRole::Summary,
        AgentRole::Verifier,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentRole::Router => "router",
            AgentRole::KnowledgeExtractor => "knowledge_extractor",
            AgentRole::KnowledgeManager => "knowledge_manager",
            AgentRole::Summary => "summary",
            AgentRole::Verifier => "verifier",
        }
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub speaker: Speaker,
    pub text: String,
}

impl ChatMessage {
    pub fn user(text: impl Into<String>) -> Self {
        Self {
            speaker: Speaker::User,
            text: text.into(),
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self {
            speaker: Speaker::Assistant,
            text: text.into(),
        }
    }

    pub fn system(text: impl Into<String>) -> Self {
        Self {
            speaker: Speaker::System,
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub role: AgentRole,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub request_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ChatRequest {
    pub fn new(role: AgentRole, request_id: impl Into<String>, prompt: impl Into<String>) -> Self {
        Self {
            role,
            messages: vec![ChatMessage::user(prompt)],
            temperature: 0.0,
            max_tokens: 1024,
            request_id: request_id.into(),
            seed: None,
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    /// All message texts, as seen by script matchers and recorded in traces.
    pub fn transcript(&self) -> String {
        if let [only] = self.messages.as_slice() {
            return only.text.clone();
        }
        self.messages
            .iter()
            .map(|m| {
                let who = match m.speaker {
                    Speaker::System => "system",
                    Speaker::User => "user",
                    Speaker::Assistant => "assistant",
                };
                format!("[{who}]\n{}", m.text)
            })
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    fn validate(&self) -> Result<(), GatewayError> {
        if !self.messages.iter().any(|m| m.speaker == Speaker::User) {
            return Err(GatewayError::InvalidRequest(
                "request needs at least one user message".into(),
            ));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(GatewayError::InvalidRequest("temperature must be >= 0".into()));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub token_usage: TokenUsage,
    pub backend_id: String,
    pub latency_ms: u64,
    /// Transport attempts including the successful one.
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatewayError {
    #[error("no backend configured for role {0}")]
    RoleNotConfigured(AgentRole),
    #[error("backend {backend} unavailable after {attempts} attempt(s): {last_error}")]
    BackendUnavailable {
        backend: String,
        attempts: u32,
        last_error: String,
    },
    #[error("backend {backend} returned an empty response")]
    EmptyResponse { backend: String },
    #[error("backend {backend} rejected the request: {error}")]
    Rejected { backend: String, error: String },
    #[error("invalid chat request: {0}")]
    InvalidRequest(String),
}

/// Rough token estimate used when a backend reports no usage.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

/// Deterministic request ids, `<prefix>-<n>`, unique within one run.
#[derive(Debug, Clone)]
pub struct RequestIds {
    prefix: String,
    next: u32,
}

impl RequestIds {
    pub fn new(prefix: impl Into<String>) -> Self {
        Self {
            prefix: prefix.into(),
            next: 0,
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn next(&mut self) -> String {
        self.next += 1;
        format!("{}-{:03}", self.prefix, self.next)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleBinding {
    pub backend: String,
    pub model: String,
}

/// Routes requests by role to a backend and model.
pub struct Gateway {
    backends: HashMap<String, Arc<dyn ChatBackend>>,
    roles: HashMap<AgentRole, RoleBinding>,
    retry: RetryPolicy,
    meter: Mutex<Meter>,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut backends: Vec<_> = self.backends.keys().collect();
        backends.sort();
        f.debug_struct("Gateway")
            .field("backends", &backends)
            .field("roles", &self.roles)
            .field("retry", &self.retry)
            .finish()
    }
}

#[derive(Default)]
pub struct GatewayBuilder {
    backends: HashMap<String, Arc<dyn ChatBackend>>,
    roles: HashMap<AgentRole, RoleBinding>,
    retry: RetryPolicy,
}

impl GatewayBuilder {
    pub fn backend(mut self, backend: Arc<dyn ChatBackend>) -> Self {
        self.backends.insert(backend.id().to_string(), backend);
        self
    }

    pub fn role(mut self, role: AgentRole, backend: &str, model: &str) -> Self {
        self.roles.insert(
            role,
            RoleBinding {
                backend: backend.to_string(),
                model: model.to_string(),
            },
        );
        self
    }

    /// Binds every role to one backend.
    pub fn all_roles(mut self, backend: &str, model: &str) -> Self {
        for role in AgentRole::ALL {
            self = self.role(role, backend, model);
        }
        self
    }

    pub fn retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn build(self) -> Result<Gateway, GatewayError> {
        for (role, binding) in &self.roles {
            if !self.backends.contains_key(&binding.backend) {
                return Err(GatewayError::InvalidRequest(format!(
                    "role {role} bound to unknown backend {}",
                    binding.backend
                )));
            }
        }
        Ok(Gateway {
            backends: self.backends,
            roles: self.roles,
            retry: self.retry,
            meter: Mutex::new(Meter::default()),
        })
    }
}

impl Gateway {
    pub fn builder() -> GatewayBuilder {
        GatewayBuilder::default()
    }

    /// Gateway with every role served by one scripted backend and no retry delay.
    pub fn scripted(script: Script) -> Self {
        let backend = Arc::new(ScriptedBackend::new("script", script));
        Self::builder()
            .backend(backend)
            .all_roles("script", "scripted")
            .retry(RetryPolicy::immediate(3))
            .build()
            .expect("scripted backend is registered")
    }

    pub fn role_binding(&self, role: AgentRole) -> Option<&RoleBinding> {
        self.roles.get(&role)
    }

    pub fn retry_policy(&self) -> &RetryPolicy {
        &self.retry
    }

    /// Sends one request, retrying transient failures.
    pub async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.validate()?;
        let binding = self
            .roles
            .get(&request.role)
            .ok_or(GatewayError::RoleNotConfigured(request.role))?;
        let backend = self
            .backends
            .get(&binding.backend)
            .ok_or(GatewayError::RoleNotConfigured(request.role))?;

        let started = Instant::now();
        let mut attempt: u32 = 0;
        let reply = loop {
            attempt += 1;
            match backend.send(&binding.model, request).await {
                Ok(reply) => break reply,
                Err(e) if e.is_transient() && attempt < self.retry.max_attempts => {
                    tracing::warn!(
                        backend = backend.id(),
                        role = %request.role,
                        attempt,
                        error = %e,
                        "transient backend failure, retrying"
                    );
                    tokio::time::sleep(self.retry.delay_after(attempt - 1)).await;
                }
                Err(e) if e.is_transient() => {
                    return Err(GatewayError::BackendUnavailable {
                        backend: backend.id().to_string(),
                        attempts: attempt,
                        last_error: e.to_string(),
                    })
                }
                Err(e) => {
                    return Err(GatewayError::Rejected {
                        backend: backend.id().to_string(),
                        error: e.to_string(),
                    })
                }
            }
        };

        if reply.text.trim().is_empty() {
            return Err(GatewayError::EmptyResponse {
                backend: backend.id().to_string(),
            });
        }

        self.meter
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .record(request.role, reply.usage);

        Ok(ChatResponse {
            text: reply.text,
            token_usage: reply.usage,
            backend_id: backend.id().to_string(),
            latency_ms: started.elapsed().as_millis() as u64,
            attempts: attempt,
        })
    }

    /// [`complete`](Self::complete), recording the exchange (or its failure) in `trace`.
    pub async fn exchange(
        &self,
        stage: Stage,
        request: &ChatRequest,
        trace: &mut ReasoningTrace,
    ) -> Result<ChatResponse, GatewayError> {
        let prompt = request.transcript();
        match self.complete(request).await {
            Ok(resp) => {
                trace.record_exchange(
                    stage,
                    request.role.as_str(),
                    &request.request_id,
                    prompt,
                    resp.text.clone(),
                    resp.token_usage,
                    resp.attempts,
                );
                Ok(resp)
            }
            Err(e) => {
                trace.record_failure(
                    stage,
                    request.role.as_str(),
                    &request.request_id,
                    prompt,
                    e.to_string(),
                );
                Err(e)
            }
        }
    }

    /// Snapshot of per-role usage since construction or the last reset.
    pub fn usage_report(&self) -> UsageReport {
        self.meter.lock().unwrap_or_else(|e| e.into_inner()).snapshot()
    }

    pub fn reset_usage(&self) {
        *self.meter.lock().unwrap_or_else(|e| e.into_inner()) = Meter::default();
    }
}
