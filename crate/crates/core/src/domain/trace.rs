use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

/// Pipeline stage a trace event belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    Route,
    Extract,
    Manage,
    Summarize,
    Verify,
    Fallback,
    Aggregate,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl TokenUsage {
    pub fn new(prompt_tokens: u64, completion_tokens: u64) -> Self {
        Self {
            prompt_tokens,
            completion_tokens,
        }
    }

    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

impl std::ops::AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: Self) {
        self.prompt_tokens += rhs.prompt_tokens;
        self.completion_tokens += rhs.completion_tokens;
    }
}

/// Whether an event is a completed model exchange, a failed one, or an
/// internal step (routing, aggregation) that involved no model call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Exchange,
    Failure,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub seq: u32,
    pub stage: Stage,
    pub kind: EventKind,
    pub agent_role: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<String>,
    pub rendered_prompt: String,
    pub raw_response: String,
    pub timestamp: DateTime<Utc>,
    pub token_usage: TokenUsage,
    #[serde(default)]
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Ordered record of everything a run did.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReasoningTrace {
    pub events: Vec<TraceEvent>,
}

impl ReasoningTrace {
    pub fn new() -> Self {
        Self::default()
    }

    fn next_seq(&self) -> u32 {
        self.events.len() as u32
    }

    #[allow(clippy::too_many_arguments)]
    pub fn record_exchange(
        &mut self,
        stage: Stage,
        agent_role: &str,
        request_id: &str,
        rendered_prompt: String,
        raw_response: String,
        token_usage: TokenUsage,
        attempts: u32,
    ) -> &mut TraceEvent {
        let seq = self.next_seq();
        self.events.push(TraceEvent {
            seq,
            stage,
            kind: EventKind::Exchange,
            agent_role: agent_role.to_string(),
            request_id: Some(request_id.to_string()),
            rendered_prompt,
            raw_response,
            timestamp: Utc::now(),
            token_usage,
            attempts,
            notes: Vec::new(),
        });
        self.events.last_mut().unwrap()
    }

    pub fn record_failure(
        &mut self,
        stage: Stage,
        agent_role: &str,
        request_id: &str,
        rendered_prompt: String,
        error: String,
    ) {
        let seq = self.next_seq();
        self.events.push(TraceEvent {
            seq,
            stage,
            kind: EventKind::Failure,
            agent_role: agent_role.to_string(),
            request_id: Some(request_id.to_string()),
            rendered_prompt,
            raw_response: String::new(),
            timestamp: Utc::now(),
            token_usage: TokenUsage::default(),
            attempts: 0,
            notes: vec![error],
        });
    }

    pub fn record_internal(&mut self, stage: Stage, agent_role: &str, summary: String) {
        let seq = self.next_seq();
        self.events.push(TraceEvent {
            seq,
            stage,
            kind: EventKind::Internal,
            agent_role: agent_role.to_string(),
            request_id: None,
            rendered_prompt: String::new(),
            raw_response: summary,
            timestamp: Utc::now(),
            token_usage: TokenUsage::default(),
            attempts: 0,
            notes: Vec::new(),
        });
    }

    /// Attaches a note to the most recent event.
    pub fn note(&mut self, note: impl Into<String>) {
        if let Some(last) = self.events.last_mut() {
            last.notes.push(note.into());
        }
    }

    pub fn exchanges(&self) -> impl Iterator<Item = &TraceEvent> {
        self.events.iter().filter(|e| e.kind == EventKind::Exchange)
    }

    /// Completed exchanges per agent role.
    pub fn calls_by_role(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for e in self.exchanges() {
            *out.entry(e.agent_role.clone()).or_insert(0) += 1;
        }
        out
    }

    pub fn calls_for(&self, agent_role: &str) -> usize {
        self.exchanges().filter(|e| e.agent_role == agent_role).count()
    }

    pub fn stages(&self) -> Vec<Stage> {
        self.events.iter().map(|e| e.stage).collect()
    }

    pub fn usage_by_role(&self) -> BTreeMap<String, TokenUsage> {
        let mut out: BTreeMap<String, TokenUsage> = BTreeMap::new();
        for e in self.exchanges() {
            *out.entry(e.agent_role.clone()).or_default() += e.token_usage;
        }
        out
    }

    /// Copy with timestamps zeroed, for byte comparisons across runs.
    pub fn without_timestamps(&self) -> Self {
        let mut t = self.clone();
        for e in &mut t.events {
            e.timestamp = DateTime::<Utc>::UNIX_EPOCH;
        }
        t
    }
}
