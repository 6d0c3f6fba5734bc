use serde::{Deserialize, Serialize};

use super::{CandidateAnswer, ReasoningTrace, TaskKind};

/// Pipeline branch a case was sent down.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Route {
    Common,
    Rare,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisOutcome {
    pub task: TaskKind,
    pub answers: Vec<CandidateAnswer>,
    /// Mean of `per_sample_answers` confidences.
    pub final_confidence: f64,
    pub route: Route,
    pub verify_iterations_used: u32,
    /// False only when the post-loop fallback summary produced the answer.
    pub converged: bool,
    pub per_sample_answers: Vec<CandidateAnswer>,
    pub trace: ReasoningTrace,
}

impl DiagnosisOutcome {
    pub fn top(&self) -> Option<&CandidateAnswer> {
        self.answers.first()
    }

    /// Ranked answer labels, best first.
    pub fn labels(&self) -> Vec<String> {
        self.answers.iter().map(|a| a.label.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Assessment {
    Correct,
    Incorrect,
}

/// Structured result of checking a proposed diagnosis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifierVerdict {
    pub assessment: Assessment,
    pub final_diagnosis: String,
    pub reasoning: String,
}

/// A verdict together with the trace of the exchange(s) that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationRun {
    pub proposed_diagnosis: String,
    pub verdict: VerifierVerdict,
    pub trace: ReasoningTrace,
}
