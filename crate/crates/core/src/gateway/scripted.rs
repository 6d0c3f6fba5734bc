//! Deterministic backend replaying a script of canned responses.
//!
//! A script is an ordered list of entries. Each request is answered by the
//! first entry, in declaration order, that still has uses left and whose
//! role and substring predicates all hold. Entries with `times: 1` (the
//! default) therefore behave as one-shot responses that advance to the next
//! matching entry once consumed.

use std::path::Path;
use std::sync::Mutex;

use async_trait::async_trait;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{estimate_tokens, AgentRole, BackendError, BackendReply, ChatBackend, ChatRequest};
use crate::domain::TokenUsage;

/// How many requests an entry may answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Times {
    #[default]
    Once,
    Count(u64),
    Infinite,
}

impl Times {
    fn initial(self) -> Option<u64> {
        match self {
            Times::Once => Some(1),
            Times::Count(n) => Some(n),
            Times::Infinite => None,
        }
    }
}

impl Serialize for Times {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Times::Once => s.serialize_u64(1),
            Times::Count(n) => s.serialize_u64(*n),
            Times::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Times {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(1) => Ok(Times::Once),
            Raw::N(n) => Ok(Times::Count(n)),
            Raw::S(s) if s == "inf" => Ok(Times::Infinite),
            Raw::S(s) => Err(serde::de::Error::custom(format!(
                "times must be an integer or \"inf\", got {s:?}"
            ))),
        }
    }
}

/// Failure an entry injects instead of responding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptedFailure {
    /// Connection-level failure; retried by the gateway.
    Unavailable,
    /// HTTP 503; retried by the gateway.
    ServerError,
    /// HTTP 400; not retried.
    BadRequest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<AgentRole>,
    #[serde(default)]
    pub contains: Vec<String>,
    #[serde(default)]
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_tokens: Option<u64>,
    #[serde(default)]
    pub times: Times,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ScriptedFailure>,
}

impl ScriptEntry {
    pub fn new(role: Option<AgentRole>, contains: &[&str], response: impl Into<String>) -> Self {
        Self {
            role,
            contains: contains.iter().map(|s| s.to_string()).collect(),
            response: response.into(),
            prompt_tokens: None,
            completion_tokens: None,
            times: Times::Once,
            error: None,
        }
    }

    pub fn failing(role: Option<AgentRole>, contains: &[&str], failure: ScriptedFailure) -> Self {
        Self {
            error: Some(failure),
            ..Self::new(role, contains, "")
        }
    }

    pub fn times(mut self, times: Times) -> Self {
        self.times = times;
        self
    }

    pub fn usage(mut self, prompt_tokens: u64, completion_tokens: u64) -> Self {
        self.prompt_tokens = Some(prompt_tokens);
        self.completion_tokens = Some(completion_tokens);
        self
    }

    fn matches(&self, request: &ChatRequest, transcript: &str) -> bool {
        self.role.is_none_or(|r| r == request.role)
            && self.contains.iter().all(|needle| transcript.contains(needle.as_str()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Script {
    pub entries: Vec<ScriptEntry>,
}

impl Script {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(mut self, entry: ScriptEntry) -> Self {
        self.entries.push(entry);
        self
    }

    /// Appends a one-shot entry.
    pub fn respond(self, role: Option<AgentRole>, contains: &[&str], response: impl Into<String>) -> Self {
        self.push(ScriptEntry::new(role, contains, response))
    }

    /// Appends an entry answering every matching request.
    pub fn always(self, role: Option<AgentRole>, contains: &[&str], response: impl Into<String>) -> Self {
        self.push(ScriptEntry::new(role, contains, response).times(Times::Infinite))
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, std::io::Error> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

/// Script replay. Cursor advancement is serialized behind a mutex.
#[derive(Debug)]
pub struct ScriptedBackend {
    id: String,
    state: Mutex<Vec<(ScriptEntry, Option<u64>)>>,
}

impl ScriptedBackend {
    pub fn new(id: impl Into<String>, script: Script) -> Self {
        let state = script
            .entries
            .into_iter()
            .map(|e| {
                let remaining = e.times.initial();
                (e, remaining)
            })
            .collect();
        Self {
            id: id.into(),
            state: Mutex::new(state),
        }
    }

    /// Uses left per entry; `None` for unlimited entries.
    pub fn remaining(&self) -> Vec<Option<u64>> {
        self.state
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .iter()
            .map(|(_, r)| *r)
            .collect()
    }

    fn next_entry(&self, request: &ChatRequest, transcript: &str) -> Option<ScriptEntry> {
        let mut state = self.state.lock().unwrap_or_else(|e| e.into_inner());
        let (entry, remaining) = state
            .iter_mut()
            .find(|(e, r)| *r != Some(0) && e.matches(request, transcript))?;
        if let Some(r) = remaining {
            *r -= 1;
        }
        Some(entry.clone())
    }
}

#[async_trait]
impl ChatBackend for ScriptedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    async fn send(&self, _model: &str, request: &ChatRequest) -> Result<BackendReply, BackendError> {
        let transcript = request.transcript();
        let entry = self
            .next_entry(request, &transcript)
            .ok_or_else(|| BackendError::NoScriptMatch {
                role: request.role.to_string(),
                excerpt: transcript.chars().take(120).collect(),
            })?;
        match entry.error {
            Some(ScriptedFailure::Unavailable) => {
                return Err(BackendError::Transport("scripted outage".into()))
            }
            Some(ScriptedFailure::ServerError) => {
                return Err(BackendError::Status {
                    code: 503,
                    body: "scripted server error".into(),
                })
            }
            Some(ScriptedFailure::BadRequest) => {
                return Err(BackendError::Status {
                    code: 400,
                    body: "scripted bad request".into(),
                })
            }
            None => {}
        }
        let usage = TokenUsage::new(
            entry.prompt_tokens.unwrap_or_else(|| estimate_tokens(&transcript)),
            entry
                .completion_tokens
                .unwrap_or_else(|| estimate_tokens(&entry.response)),
        );
        Ok(BackendReply {
            text: entry.response,
            usage,
        })
    }
}
