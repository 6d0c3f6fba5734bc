use serde::{Deserialize, Serialize};

use super::DomainError;

/// Which pipeline a request runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    Diagnose,
    PrioritizeGenes,
    VerifyDiagnosis,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Diagnose => "diagnose",
            TaskKind::PrioritizeGenes => "prioritize-genes",
            TaskKind::VerifyDiagnosis => "verify",
        }
    }
}

/// Knobs for one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Maximum verifier rounds before the fallback summary.
    pub max_verify_iters: u32,
    /// Number of self-consistency samples for the first summary.
    pub confidence_samples: u32,
    /// Similar patients to retrieve.
    pub retrieval_top_k: usize,
    pub knn_k: usize,
    /// Ranked answers to return; one of 1, 5, 10.
    pub answer_top_k: usize,
    pub sampling_temperature: f64,
    pub verification_temperature: f64,
    /// Forwarded to live backends that accept a sampling seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampling_seed: Option<u64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            max_verify_iters: 3,
            confidence_samples: 3,
            retrieval_top_k: 5,
            knn_k: 5,
            answer_top_k: 1,
            sampling_temperature: 0.7,
            verification_temperature: 0.0,
            sampling_seed: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), DomainError> {
        let bad = |field: &str, message: &str| {
            Err(DomainError::InvalidConfig {
                field: field.to_string(),
                message: message.to_string(),
            })
        };
        if self.max_verify_iters == 0 {
            return bad("max_verify_iters", "must be at least 1");
        }
        if self.confidence_samples == 0 {
            return bad("confidence_samples", "must be at least 1");
        }
        if self.retrieval_top_k == 0 {
            return bad("retrieval_top_k", "must be at least 1");
        }
        if self.knn_k == 0 {
            return bad("knn_k", "must be at least 1");
        }
        if ![1, 5, 10].contains(&self.answer_top_k) {
            return bad("answer_top_k", "must be one of 1, 5, 10");
        }
        for (field, t) in [
            ("sampling_temperature", self.sampling_temperature),
            ("verification_temperature", self.verification_temperature),
        ] {
            if !t.is_finite() || t < 0.0 {
                return bad(field, "must be a finite value >= 0");
            }
        }
        Ok(())
    }
}
