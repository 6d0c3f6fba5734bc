//! Agentic diagnosis pipeline for rare and common diseases: routing,
//! knowledge gathering, sampled summaries with a verifier-corrector loop,
//! strict diagnosis verification and Recall@K evaluation.

pub mod config;
pub mod domain;
pub mod evaluation;
pub mod gateway;
pub mod knowledge;
pub mod orchestrator;
pub mod router;

pub use domain::{
    CandidateAnswer, DiagnosisOutcome, PatientCase, PipelineConfig, ReasoningTrace, Route, TaskKind,
    VerificationRun, VerifierVerdict,
};
pub use orchestrator::{Orchestrator, OrchestratorError, PipelineFailure, TaskOutput, TaskRequest};
