use serde::{Deserialize, Serialize};

use super::DomainError;
use crate::evaluation::{normalize_label, LabelKind};

/// One ranked answer with its self-reported confidence on a 0-100 scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateAnswer {
    pub label: String,
    pub normalized_label: String,
    pub confidence: f64,
    pub rationale: String,
}

impl CandidateAnswer {
    /// Fails on a confidence outside `[0, 100]`; clamping happens only where
    /// model output is parsed.
    pub fn new(
        label: impl Into<String>,
        kind: LabelKind,
        confidence: f64,
        rationale: impl Into<String>,
    ) -> Result<Self, DomainError> {
        if !(0.0..=100.0).contains(&confidence) {
            return Err(DomainError::ConfidenceOutOfRange(confidence));
        }
        let label = label.into();
        Ok(Self {
            normalized_label: normalize_label(&label, kind),
            label,
            confidence,
            rationale: rationale.into(),
        })
    }
}
