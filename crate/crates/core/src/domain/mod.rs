//! Shared value types and prompt templates. Nothing here performs I/O apart
//! from loading template overrides.

mod answer;
mod case;
mod config;
mod outcome;
mod template;
pub mod templates;
mod trace;

pub use answer::CandidateAnswer;
pub use case::{validate_case, GeneFinding, PatientCase};
pub use config::{PipelineConfig, TaskKind};
pub use outcome::{Assessment, DiagnosisOutcome, Route, VerificationRun, VerifierVerdict};
pub use template::{bindings, render_template, PromptTemplate};
pub use templates::TemplateSet;
pub use trace::{EventKind, ReasoningTrace, Stage, TokenUsage, TraceEvent};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("missing binding for placeholder {{{0}}}")]
    MissingPlaceholder(String),
    #[error("template {name} is malformed at byte {offset}: {reason}")]
    InvalidTemplate {
        name: String,
        offset: usize,
        reason: String,
    },
    #[error("cannot read template {path}: {message}")]
    TemplateIo { path: String, message: String },
    #[error("case has no phenotypes")]
    EmptyCase,
    #[error("invalid {field}: {message}")]
    InvalidField { field: String, message: String },
    #[error("invalid pipeline config {field}: {message}")]
    InvalidConfig { field: String, message: String },
    #[error("confidence {0} outside [0, 100]")]
    ConfidenceOutOfRange(f64),
}
