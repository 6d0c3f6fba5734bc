use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::confidence::{aggregate_confidence, rank_answers, Aggregate, ConfidenceSample};
use super::parse::{parse_answer, parse_loop_verdict, LoopVerdict, ParsedAnswer};
use super::verdict::{parse_verdict, MalformedVerdict, VerdictSection};
use super::{OrchestratorError, PipelineFailure};
use crate::domain::{
    bindings, validate_case, Assessment, CandidateAnswer, DiagnosisOutcome, PatientCase, PipelineConfig,
    ReasoningTrace, Route, Stage, TaskKind, TemplateSet, VerificationRun, VerifierVerdict,
};
use crate::evaluation::{normalize_label, LabelKind};
use crate::gateway::{AgentRole, ChatMessage, ChatRequest, Gateway, GatewayError, RequestIds};
use crate::knowledge::{ContextDoc, KnowledgeEngine};
use crate::router::{Embedder, Router};

const ANSWER_REASK: &str = "Your previous reply did not end with a line of the form \
\"ANSWER: <label> | CONFIDENCE: <integer 0-100>\". Reply again and finish with exactly that line.";

const LOOP_VERDICT_REASK: &str = "Your previous reply did not contain a line starting with \
\"VERDICT:\" followed by ACCEPT or REJECT. Reply again with that line.";

/// One unit of work for the orchestrator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRequest {
    pub kind: TaskKind,
    pub case: PatientCase,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposed_diagnosis: Option<String>,
    #[serde(default)]
    pub config: PipelineConfig,
}

impl TaskRequest {
    pub fn diagnose(case: PatientCase, config: PipelineConfig) -> Self {
        Self {
            kind: TaskKind::Diagnose,
            case,
            proposed_diagnosis: None,
            config,
        }
    }

    pub fn prioritize_genes(case: PatientCase, config: PipelineConfig) -> Self {
        Self {
            kind: TaskKind::PrioritizeGenes,
            ..Self::diagnose(case, config)
        }
    }

    pub fn verify(case: PatientCase, proposed_diagnosis: impl Into<String>, config: PipelineConfig) -> Self {
        Self {
            kind: TaskKind::VerifyDiagnosis,
            case,
            proposed_diagnosis: Some(proposed_diagnosis.into()),
            config,
        }
    }

    pub fn validate(&self) -> Result<(), OrchestratorError> {
        match (self.kind, &self.proposed_diagnosis) {
            (TaskKind::VerifyDiagnosis, None) => Err(OrchestratorError::InvalidRequest(
                "verification requires a proposed diagnosis".into(),
            )),
            (TaskKind::Diagnose | TaskKind::PrioritizeGenes, Some(_)) => Err(OrchestratorError::InvalidRequest(
                "proposed_diagnosis is only accepted for verification".into(),
            )),
            _ => Ok(self.config.validate()?),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TaskOutput {
    Outcome(DiagnosisOutcome),
    Verification(VerificationRun),
}

/// A rejected answer and the verifier's reason, fed back to later summaries.
#[derive(Debug, Clone)]
struct Correction {
    label: String,
    rationale: String,
}

fn answer_kind(kind: TaskKind) -> LabelKind {
    match kind {
        TaskKind::PrioritizeGenes => LabelKind::Gene,
        _ => LabelKind::Disease,
    }
}

fn format_confidence(c: f64) -> String {
    if c.fract() == 0.0 {
        format!("{c:.0}")
    } else {
        format!("{c:.2}")
    }
}

/// Per-run sampling state so every summary call gets its own seed offset.
struct RunState<'a> {
    config: &'a PipelineConfig,
    kind: LabelKind,
    ids: RequestIds,
    summary_calls: u64,
}

impl RunState<'_> {
    fn next_seed(&mut self) -> Option<u64> {
        let seed = self.config.sampling_seed.map(|s| s.wrapping_add(self.summary_calls));
        self.summary_calls += 1;
        seed
    }
}

/// Routes cases and drives the verifier-corrector loop.
#[derive(Clone)]
pub struct Orchestrator {
    gateway: Arc<Gateway>,
    router: Arc<Router>,
    embedder: Arc<dyn Embedder>,
    knowledge: Arc<KnowledgeEngine>,
    templates: Arc<TemplateSet>,
}

impl std::fmt::Debug for Orchestrator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Orchestrator")
            .field("knowledge", &self.knowledge)
            .finish_non_exhaustive()
    }
}

impl Orchestrator {
    pub fn new(
        gateway: Arc<Gateway>,
        router: Arc<Router>,
        embedder: Arc<dyn Embedder>,
        knowledge: Arc<KnowledgeEngine>,
        templates: Arc<TemplateSet>,
    ) -> Self {
        Self {
            gateway,
            router,
            embedder,
            knowledge,
            templates,
        }
    }

    /// Hashing embedder, built-in templates and no search providers or
    /// reference patients.
    pub fn offline(gateway: Arc<Gateway>, router: Router) -> Self {
        let embedder: Arc<dyn Embedder> = Arc::new(crate::router::HashingEmbedder::default());
        let templates = Arc::new(TemplateSet::default());
        let knowledge = Arc::new(KnowledgeEngine::new(gateway.clone(), embedder.clone(), templates.clone()));
        Self::new(gateway, Arc::new(router), embedder, knowledge, templates)
    }

    pub fn gateway(&self) -> &Arc<Gateway> {
        &self.gateway
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    pub async fn run(&self, request: &TaskRequest) -> Result<TaskOutput, PipelineFailure> {
        request.validate().map_err(PipelineFailure::bare)?;
        match request.kind {
            TaskKind::Diagnose => self.diagnose(&request.case, &request.config).await.map(TaskOutput::Outcome),
            TaskKind::PrioritizeGenes => self
                .prioritize_genes(&request.case, &request.config)
                .await
                .map(TaskOutput::Outcome),
            TaskKind::VerifyDiagnosis => self
                .verify_and_correct(
                    &request.case,
                    request.proposed_diagnosis.as_deref().unwrap_or_default(),
                    &request.config,
                )
                .await
                .map(TaskOutput::Verification),
        }
    }

    pub async fn diagnose(
        &self,
        case: &PatientCase,
        config: &PipelineConfig,
    ) -> Result<DiagnosisOutcome, PipelineFailure> {
        self.answer_task(TaskKind::Diagnose, case, config).await
    }

    pub async fn prioritize_genes(
        &self,
        case: &PatientCase,
        config: &PipelineConfig,
    ) -> Result<DiagnosisOutcome, PipelineFailure> {
        self.answer_task(TaskKind::PrioritizeGenes, case, config).await
    }

    async fn answer_task(
        &self,
        kind: TaskKind,
        case: &PatientCase,
        config: &PipelineConfig,
    ) -> Result<DiagnosisOutcome, PipelineFailure> {
        let case = validate_case(case.clone()).map_err(|e| PipelineFailure::bare(e.into()))?;
        config.validate().map_err(|e| PipelineFailure::bare(e.into()))?;
        let mut trace = ReasoningTrace::new();
        let mut state = RunState {
            config,
            kind: answer_kind(kind),
            ids: RequestIds::new(case.id.clone()),
            summary_calls: 0,
        };
        match self.answer_steps(kind, &case, &mut state, &mut trace).await {
            Ok(mut outcome) => {
                outcome.trace = trace;
                Ok(outcome)
            }
            Err(error) => Err(PipelineFailure { error, trace }),
        }
    }

    async fn answer_steps(
        &self,
        kind: TaskKind,
        case: &PatientCase,
        state: &mut RunState<'_>,
        trace: &mut ReasoningTrace,
    ) -> Result<DiagnosisOutcome, OrchestratorError> {
        let config = state.config;
        let decision = self.router.decide(self.embedder.as_ref(), case).await?;
        let route = decision.route();
        trace.record_internal(
            Stage::Route,
            "router",
            format!(
                "label={} route={route:?} score={:.4} neighbors={:?}",
                decision.label.as_str(),
                decision.score,
                decision.neighbor_ids
            ),
        );
        let task_prompt = self.templates.task_prompt(kind, case)?;

        if route == Route::Common {
            let prompt = self.summary_prompt(kind, &task_prompt, None, &[], config.answer_top_k)?;
            let (samples, agg) = self
                .sample_and_aggregate(&prompt, config.confidence_samples as usize, Stage::Summarize, state, trace)
                .await?;
            return Ok(assemble(kind, route, &samples, &agg, config.answer_top_k, 0, true));
        }

        let bundle = self
            .knowledge
            .extract_knowledge(case, config, trace, &mut state.ids)
            .await?;
        let context = self
            .knowledge
            .synthesize_context(case, &bundle, trace, &mut state.ids)
            .await?;
        let prompt = self.summary_prompt(kind, &task_prompt, Some(&context), &[], config.answer_top_k)?;
        let (mut samples, mut agg) = self
            .sample_and_aggregate(&prompt, config.confidence_samples as usize, Stage::Summarize, state, trace)
            .await?;

        let question = format!("{task_prompt}\n\nExternal knowledge:\n{}", context.text);
        let mut corrections = Vec::new();
        for iteration in 1..=config.max_verify_iters {
            let verdict = match self.verify(&question, &agg.winner.label, agg.final_confidence, state, trace).await {
                Ok(v) => v,
                Err(OrchestratorError::Gateway(e)) => {
                    trace.note(format!("verifier unavailable ({e}); treated as rejection"));
                    LoopVerdict {
                        accepted: false,
                        rationale: String::new(),
                    }
                }
                Err(e) => return Err(e),
            };
            if verdict.accepted {
                return Ok(assemble(kind, route, &samples, &agg, config.answer_top_k, iteration, true));
            }
            corrections.push(Correction {
                label: agg.winner.label.clone(),
                rationale: verdict.rationale,
            });
            let prompt = self.summary_prompt(kind, &task_prompt, Some(&context), &corrections, config.answer_top_k)?;
            (samples, agg) = self
                .sample_and_aggregate(&prompt, 1, Stage::Summarize, state, trace)
                .await?;
        }

        let prompt = self.summary_prompt(kind, &task_prompt, Some(&context), &corrections, config.answer_top_k)?;
        let (samples, agg) = self.sample_and_aggregate(&prompt, 1, Stage::Fallback, state, trace).await?;
        Ok(assemble(
            kind,
            route,
            &samples,
            &agg,
            config.answer_top_k,
            config.max_verify_iters,
            false,
        ))
    }

    fn summary_prompt(
        &self,
        kind: TaskKind,
        task_prompt: &str,
        context: Option<&ContextDoc>,
        corrections: &[Correction],
        top_k: usize,
    ) -> Result<String, OrchestratorError> {
        let context_section = context
            .map(|c| format!("\nExternal knowledge:\n{}\n", c.text))
            .unwrap_or_default();
        let correction_section = if corrections.is_empty() {
            String::new()
        } else {
            let mut s = String::from("\nA reviewer rejected earlier answers:\n");
            for c in corrections {
                if c.rationale.is_empty() {
                    s.push_str(&format!("- {}\n", c.label));
                } else {
                    s.push_str(&format!("- {}: {}\n", c.label, c.rationale));
                }
            }
            s.push_str("Take this feedback into account.\n");
            s
        };
        let answer_noun = match kind {
            TaskKind::PrioritizeGenes => "gene symbol",
            _ => "diagnosis name",
        };
        let alt_instruction = if top_k > 1 {
            format!(
                "Then list up to {} further candidates, best first, one per line as:\nALT: <{answer_noun}> | CONFIDENCE: <integer 0-100>",
                top_k - 1
            )
        } else {
            String::new()
        };
        Ok(self.templates.summary_answer.render(&bindings([
            ("task_prompt", task_prompt.to_string()),
            ("context_section", context_section),
            ("correction_section", correction_section),
            ("answer_noun", answer_noun.to_string()),
            ("alt_instruction", alt_instruction),
        ]))?)
    }

    async fn sample_and_aggregate(
        &self,
        prompt: &str,
        s: usize,
        stage: Stage,
        state: &mut RunState<'_>,
        trace: &mut ReasoningTrace,
    ) -> Result<(Vec<ConfidenceSample>, Aggregate), OrchestratorError> {
        let samples = self.sample_summaries(prompt, s, stage, state, trace).await?;
        let agg = aggregate_confidence(&samples).ok_or_else(|| OrchestratorError::InvalidRequest("no samples".into()))?;
        trace.record_internal(
            Stage::Aggregate,
            "orchestrator",
            format!(
                "winner={:?} c_f={} samples={}",
                agg.winner.label,
                format_confidence(agg.final_confidence),
                samples.len()
            ),
        );
        Ok((samples, agg))
    }

    /// Exactly `s` summary calls over the same prompt, plus at most one
    /// re-ask per malformed reply.
    async fn sample_summaries(
        &self,
        prompt: &str,
        s: usize,
        stage: Stage,
        state: &mut RunState<'_>,
        trace: &mut ReasoningTrace,
    ) -> Result<Vec<ConfidenceSample>, OrchestratorError> {
        let mut out = Vec::with_capacity(s);
        for i in 0..s {
            let request = ChatRequest::new(AgentRole::Summary, state.ids.next(), prompt)
                .with_temperature(state.config.sampling_temperature)
                .with_seed(state.next_seed());
            let parsed = self.summary_call(request, stage, state, trace).await?;
            out.push(ConfidenceSample {
                sample_index: i as u32,
                answer: parsed.primary,
                alternatives: parsed.alternatives,
            });
        }
        Ok(out)
    }

    async fn summary_call(
        &self,
        request: ChatRequest,
        stage: Stage,
        state: &mut RunState<'_>,
        trace: &mut ReasoningTrace,
    ) -> Result<ParsedAnswer, OrchestratorError> {
        let response = self.gateway.exchange(stage, &request, trace).await?;
        if let Some(parsed) = parse_answer(&response.text, state.kind) {
            for w in &parsed.warnings {
                trace.note(w.clone());
            }
            return Ok(parsed);
        }
        trace.note("reply has no parsable answer line; re-asking once");
        let mut retry = request;
        retry.request_id = state.ids.next();
        retry.messages.push(ChatMessage::assistant(response.text));
        retry.messages.push(ChatMessage::user(ANSWER_REASK));
        let response = self.gateway.exchange(stage, &retry, trace).await?;
        match parse_answer(&response.text, state.kind) {
            Some(parsed) => {
                for w in &parsed.warnings {
                    trace.note(w.clone());
                }
                Ok(parsed)
            }
            None => Err(OrchestratorError::AnswerParse { raw: response.text }),
        }
    }

    /// One in-loop verifier call, re-asked once when the verdict line is missing.
    async fn verify(
        &self,
        question: &str,
        answer: &str,
        confidence: f64,
        state: &mut RunState<'_>,
        trace: &mut ReasoningTrace,
    ) -> Result<LoopVerdict, OrchestratorError> {
        let prompt = self.templates.verify_answer.render(&bindings([
            ("question", question.to_string()),
            ("answer", answer.to_string()),
            ("confidence", format_confidence(confidence)),
        ]))?;
        let request = ChatRequest::new(AgentRole::Verifier, state.ids.next(), prompt)
            .with_temperature(state.config.verification_temperature);
        let response = self.gateway.exchange(Stage::Verify, &request, trace).await?;
        if let Some(v) = parse_loop_verdict(&response.text) {
            return Ok(v);
        }
        trace.note("reply has no VERDICT line; re-asking once");
        let mut retry = request;
        retry.request_id = state.ids.next();
        retry.messages.push(ChatMessage::assistant(response.text));
        retry.messages.push(ChatMessage::user(LOOP_VERDICT_REASK));
        let response = self.gateway.exchange(Stage::Verify, &retry, trace).await?;
        parse_loop_verdict(&response.text).ok_or(OrchestratorError::VerdictParse { raw: response.text })
    }

    /// Checks a physician's proposed diagnosis with the strict three-section
    /// verification prompt.
    pub async fn verify_and_correct(
        &self,
        case: &PatientCase,
        proposed_diagnosis: &str,
        config: &PipelineConfig,
    ) -> Result<VerificationRun, PipelineFailure> {
        let case = validate_case(case.clone()).map_err(|e| PipelineFailure::bare(e.into()))?;
        config.validate().map_err(|e| PipelineFailure::bare(e.into()))?;
        let proposed = proposed_diagnosis.trim();
        if proposed.is_empty() {
            return Err(PipelineFailure::bare(OrchestratorError::InvalidRequest(
                "proposed diagnosis must not be empty".into(),
            )));
        }
        let mut trace = ReasoningTrace::new();
        let mut ids = RequestIds::new(case.id.clone());
        match self
            .verify_steps(&case, proposed, config, &mut ids, &mut trace)
            .await
        {
            Ok(verdict) => Ok(VerificationRun {
                proposed_diagnosis: proposed.to_string(),
                verdict,
                trace,
            }),
            Err(error) => Err(PipelineFailure { error, trace }),
        }
    }

    async fn verify_steps(
        &self,
        case: &PatientCase,
        proposed: &str,
        config: &PipelineConfig,
        ids: &mut RequestIds,
        trace: &mut ReasoningTrace,
    ) -> Result<VerifierVerdict, OrchestratorError> {
        let prompt = self.templates.error_detection.render(&bindings([
            ("PHENOTYPE_LIST", case.phenotype_list()),
            ("PROPOSED_DIAGNOSIS", proposed.to_string()),
        ]))?;
        let request = ChatRequest::new(AgentRole::Verifier, ids.next(), prompt)
            .with_temperature(config.verification_temperature);
        let response = self.gateway.exchange(Stage::Verify, &request, trace).await?;
        let problem = match checked_verdict(&response.text, proposed) {
            Ok(v) => return Ok(v),
            Err(e) => e,
        };
        trace.note(format!("{problem}; re-asking once"));
        let mut retry = request;
        retry.request_id = ids.next();
        retry.messages.push(ChatMessage::assistant(response.text));
        retry.messages.push(ChatMessage::user(format!(
            "Your previous reply could not be used ({problem}). Reply again using exactly the three sections \
             \"Diagnosis Assessment:\", \"Final Diagnosis:\" and \"Reasoning:\". When the assessment is Correct, \
             the final diagnosis must be the proposed diagnosis."
        )));
        let response = self.gateway.exchange(Stage::Verify, &retry, trace).await?;
        checked_verdict(&response.text, proposed).map_err(|e| OrchestratorError::MalformedVerdict {
            section: e.section,
            problem: e.problem,
            raw: response.text,
        })
    }
}

/// Parses a strict verdict and requires a Correct assessment to name the
/// proposal itself.
fn checked_verdict(text: &str, proposed: &str) -> Result<VerifierVerdict, MalformedVerdict> {
    let verdict = parse_verdict(text)?;
    if verdict.assessment == Assessment::Correct
        && normalize_label(&verdict.final_diagnosis, LabelKind::Disease) != normalize_label(proposed, LabelKind::Disease)
    {
        return Err(MalformedVerdict {
            section: VerdictSection::FinalDiagnosis,
            problem: format!(
                "names {:?} although the assessment is Correct for {proposed:?}",
                verdict.final_diagnosis
            ),
        });
    }
    Ok(verdict)
}

fn assemble(
    kind: TaskKind,
    route: Route,
    samples: &[ConfidenceSample],
    agg: &Aggregate,
    top_k: usize,
    iterations: u32,
    converged: bool,
) -> DiagnosisOutcome {
    DiagnosisOutcome {
        task: kind,
        answers: rank_answers(samples, agg, top_k),
        final_confidence: agg.final_confidence,
        route,
        verify_iterations_used: iterations,
        converged,
        per_sample_answers: samples.iter().map(|s| s.answer.clone()).collect::<Vec<CandidateAnswer>>(),
        trace: ReasoningTrace::new(),
    }
}

impl From<GatewayError> for PipelineFailure {
    fn from(e: GatewayError) -> Self {
        PipelineFailure::bare(e.into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Script, ScriptEntry, ScriptedFailure, Times};
    use crate::router::HashingEmbedder;

    fn orchestrator(script: Script, route: Route) -> Orchestrator {
        let gateway = Arc::new(Gateway::scripted(script));
        let embedder: Arc<dyn Embedder> = Arc::new(HashingEmbedder::default());
        let templates = Arc::new(TemplateSet::default());
        let knowledge = Arc::new(KnowledgeEngine::new(gateway.clone(), embedder.clone(), templates.clone()));
        Orchestrator::new(gateway, Arc::new(Router::fixed(route)), embedder, knowledge, templates)
    }

    fn case() -> PatientCase {
        PatientCase::new("c1", ["arthrogryposis", "ptosis"])
    }

    fn config(s: u32, n: u32) -> PipelineConfig {
        PipelineConfig {
            confidence_samples: s,
            max_verify_iters: n,
            ..PipelineConfig::default()
        }
    }

    fn rare_script(verifier: &str) -> Script {
        Script::new()
            .always(Some(AgentRole::KnowledgeExtractor), &[], "```\ncontractures\n```")
            .always(Some(AgentRole::KnowledgeManager), &[], "CONTEXT: none")
            .always(Some(AgentRole::Summary), &[], "ANSWER: Kabuki syndrome | CONFIDENCE: 70")
            .always(Some(AgentRole::Verifier), &[], verifier)
    }

    #[tokio::test]
    async fn common_route_single_summary() {
        let script = Script::new().respond(Some(AgentRole::Summary), &["Make diagnosis"], "ANSWER: X | CONFIDENCE: 80");
        let o = orchestrator(script, Route::Common);
        let out = o.diagnose(&case(), &config(1, 3)).await.unwrap();
        assert_eq!(out.route, Route::Common);
        assert!(out.converged);
        assert_eq!(out.verify_iterations_used, 0);
        assert_eq!(out.trace.calls_for("summary"), 1);
        assert_eq!(out.trace.calls_for("verifier"), 0);
        assert_eq!(out.trace.calls_for("knowledge_extractor"), 0);
        assert_eq!(out.final_confidence, 80.0);
    }

    #[tokio::test]
    async fn rare_accept_first() {
        let o = orchestrator(rare_script("VERDICT: ACCEPT"), Route::Rare);
        let out = o.diagnose(&case(), &config(1, 3)).await.unwrap();
        assert!(out.converged);
        assert_eq!(out.verify_iterations_used, 1);
        let calls = out.trace.calls_by_role();
        assert_eq!(calls.get("knowledge_extractor"), Some(&1));
        assert_eq!(calls.get("knowledge_manager"), Some(&1));
        assert_eq!(calls.get("summary"), Some(&1));
        assert_eq!(calls.get("verifier"), Some(&1));
    }

    #[tokio::test]
    async fn rare_always_reject_falls_back() {
        let o = orchestrator(rare_script("VERDICT: REJECT - wrong subtype"), Route::Rare);
        let out = o.diagnose(&case(), &config(1, 2)).await.unwrap();
        assert!(!out.converged);
        assert_eq!(out.verify_iterations_used, 2);
        assert_eq!(out.trace.calls_for("summary"), 4);
        assert_eq!(out.trace.calls_for("verifier"), 2);
        assert_eq!(out.trace.stages().last(), Some(&Stage::Aggregate));
        let fallback = out.trace.exchanges().filter(|e| e.stage == Stage::Fallback).count();
        assert_eq!(fallback, 1);
        let last_summary = out.trace.exchanges().filter(|e| e.agent_role == "summary").last().unwrap();
        assert!(last_summary.rendered_prompt.contains("wrong subtype"));
    }

    #[tokio::test]
    async fn malformed_answer_reasked_once() {
        let script = Script::new()
            .respond(Some(AgentRole::Summary), &["did not end with"], "ANSWER: Y | CONFIDENCE: 55")
            .respond(Some(AgentRole::Summary), &["Make diagnosis"], "I am not sure.");
        let o = orchestrator(script, Route::Common);
        let out = o.diagnose(&case(), &config(1, 3)).await.unwrap();
        assert_eq!(out.top().unwrap().label, "Y");
        assert_eq!(out.trace.calls_for("summary"), 2);

        let script = Script::new().always(Some(AgentRole::Summary), &[], "still nothing");
        let o = orchestrator(script, Route::Common);
        let err = o.diagnose(&case(), &config(1, 3)).await.unwrap_err();
        assert!(matches!(err.error, OrchestratorError::AnswerParse { .. }));
        assert_eq!(err.trace.calls_for("summary"), 2);
    }

    #[tokio::test]
    async fn garbage_verdict_twice_is_an_error() {
        let o = orchestrator(rare_script("no idea"), Route::Rare);
        let err = o.diagnose(&case(), &config(1, 3)).await.unwrap_err();
        assert!(matches!(err.error, OrchestratorError::VerdictParse { .. }));
        assert_eq!(err.trace.calls_for("verifier"), 2);
    }

    #[tokio::test]
    async fn verifier_outage_counts_as_rejection() {
        let mut script = rare_script("unused");
        script.entries.retain(|e| e.role != Some(AgentRole::Verifier));
        let script = script.push(ScriptEntry::failing(Some(AgentRole::Verifier), &[], ScriptedFailure::BadRequest).times(Times::Infinite));
        let o = orchestrator(script, Route::Rare);
        let out = o.diagnose(&case(), &config(1, 2)).await.unwrap();
        assert!(!out.converged);
        assert!(out.trace.events.iter().any(|e| e.notes.iter().any(|n| n.contains("treated as rejection"))));
    }

    #[tokio::test]
    async fn gene_task_uses_gene_prompt_and_normalization() {
        let script = Script::new().respond(Some(AgentRole::Summary), &["genetic counselor"], "ANSWER: NALCN | CONFIDENCE: 90");
        let o = orchestrator(script, Route::Common);
        let out = o.prioritize_genes(&case(), &config(1, 3)).await.unwrap();
        assert_eq!(out.task, TaskKind::PrioritizeGenes);
        assert_eq!(out.top().unwrap().label, "NALCN");
        assert_eq!(out.top().unwrap().normalized_label, "nalcn");
    }

    #[tokio::test]
    async fn strict_verification() {
        let script = Script::new().respond(
            Some(AgentRole::Verifier),
            &["Kabuki syndrome"],
            "Diagnosis Assessment: Correct\nFinal Diagnosis: Kabuki syndrome\nReasoning:\n- fits",
        );
        let o = orchestrator(script, Route::Rare);
        let run = o.verify_and_correct(&case(), "Kabuki syndrome", &config(1, 3)).await.unwrap();
        assert_eq!(run.verdict.assessment, Assessment::Correct);
        assert_eq!(run.verdict.final_diagnosis, "Kabuki syndrome");

        let o = orchestrator(Script::new(), Route::Rare);
        let err = o.verify_and_correct(&case(), "   ", &config(1, 3)).await.unwrap_err();
        assert!(matches!(err.error, OrchestratorError::InvalidRequest(_)));
    }

    #[tokio::test]
    async fn inconsistent_correct_verdict_is_reasked() {
        let script = Script::new()
            .respond(
                Some(AgentRole::Verifier),
                &["could not be used"],
                "Diagnosis Assessment: Incorrect\nFinal Diagnosis: Something else\nReasoning:\n- better fit",
            )
            .respond(
                Some(AgentRole::Verifier),
                &[],
                "Diagnosis Assessment: Correct\nFinal Diagnosis: Something else\nReasoning:\n- fits",
            );
        let o = orchestrator(script, Route::Rare);
        let run = o.verify_and_correct(&case(), "Kabuki syndrome", &config(1, 3)).await.unwrap();
        assert_eq!(run.verdict.assessment, Assessment::Incorrect);
        assert_eq!(run.trace.calls_for("verifier"), 2);
    }

    #[test]
    fn request_invariants() {
        assert!(TaskRequest::diagnose(case(), PipelineConfig::default()).validate().is_ok());
        assert!(TaskRequest::verify(case(), "X", PipelineConfig::default()).validate().is_ok());
        let mut bad = TaskRequest::diagnose(case(), PipelineConfig::default());
        bad.proposed_diagnosis = Some("X".into());
        assert!(bad.validate().is_err());
        bad.kind = TaskKind::VerifyDiagnosis;
        bad.proposed_diagnosis = None;
        assert!(bad.validate().is_err());
    }
}
