use std::time::Duration;

use async_trait::async_trait;
use thiserror::Error;

use super::ChatRequest;
use crate::domain::TokenUsage;

/// What a backend returns for one successful call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendReply {
    pub text: String,
    pub usage: TokenUsage,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP {code}: {body}")]
    Status { code: u16, body: String },
    #[error("malformed provider response: {0}")]
    Protocol(String),
    #[error("missing credentials: {0}")]
    Credentials(String),
    #[error("no script entry matches {role} request: {excerpt:?}")]
    NoScriptMatch { role: String, excerpt: String },
}

impl BackendError {
    /// Transport failures and 5xx responses are worth retrying.
    pub fn is_transient(&self) -> bool {
        match self {
            BackendError::Transport(_) => true,
            BackendError::Status { code, .. } => (500..600).contains(code),
            _ => false,
        }
    }
}

#[async_trait]
pub trait ChatBackend: Send + Sync {
    fn id(&self) -> &str;
    async fn send(&self, model: &str, request: &ChatRequest) -> Result<BackendReply, BackendError>;
}

/// Exponential backoff: the n-th retry (0-based) waits `base_delay * 2^n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay: Duration::from_millis(250),
        }
    }
}

impl RetryPolicy {
    pub fn immediate(max_attempts: u32) -> Self {
        Self {
            max_attempts: max_attempts.max(1),
            base_delay: Duration::ZERO,
        }
    }

    pub fn delay_after(&self, retry_index: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(retry_index)
    }
}
