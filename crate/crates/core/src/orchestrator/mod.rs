//! Routing, knowledge gathering, sampled summaries and the verifier-corrector
//! loop, plus strict verification of a proposed diagnosis.

mod confidence;
mod parse;
mod pipeline;
mod verdict;

pub use confidence::{aggregate_confidence, rank_answers, Aggregate, ConfidenceSample};
pub use parse::{parse_answer, parse_loop_verdict, LoopVerdict, ParsedAnswer};
pub use pipeline::{Orchestrator, TaskOutput, TaskRequest};
pub use verdict::{parse_verdict, MalformedVerdict, VerdictSection};

use thiserror::Error;

use crate::domain::{DomainError, ReasoningTrace};
use crate::gateway::GatewayError;
use crate::knowledge::KnowledgeError;
use crate::router::RouterError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OrchestratorError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Router(#[from] RouterError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("summary reply has no parsable answer line after a re-ask")]
    AnswerParse { raw: String },
    #[error("verifier reply has no VERDICT line after a re-ask")]
    VerdictParse { raw: String },
    #[error("malformed verdict after a re-ask: section {section} {problem}")]
    MalformedVerdict {
        section: VerdictSection,
        problem: String,
        raw: String,
    },
}

impl OrchestratorError {
    /// The offending model reply, for parse failures.
    pub fn raw_response(&self) -> Option<&str> {
        match self {
            OrchestratorError::AnswerParse { raw }
            | OrchestratorError::VerdictParse { raw }
            | OrchestratorError::MalformedVerdict { raw, .. } => Some(raw),
            _ => None,
        }
    }

    /// True when the failure came from an unreachable backend or provider.
    pub fn is_unavailable(&self) -> bool {
        matches!(
            self,
            OrchestratorError::Gateway(GatewayError::BackendUnavailable { .. })
                | OrchestratorError::Gateway(GatewayError::RoleNotConfigured(_))
                | OrchestratorError::Knowledge(KnowledgeError::Gateway(GatewayError::BackendUnavailable { .. }))
                | OrchestratorError::Knowledge(KnowledgeError::AllSourcesFailed(_))
                | OrchestratorError::Router(RouterError::EmbeddingBackendUnavailable(_))
                | OrchestratorError::Knowledge(KnowledgeError::Embedding(RouterError::EmbeddingBackendUnavailable(_)))
        )
    }
}

/// A pipeline error together with everything recorded before it.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{error}")]
pub struct PipelineFailure {
    pub error: OrchestratorError,
    pub trace: ReasoningTrace,
}

impl PipelineFailure {
    pub fn bare(error: OrchestratorError) -> Self {
        Self {
            error,
            trace: ReasoningTrace::new(),
        }
    }
}
