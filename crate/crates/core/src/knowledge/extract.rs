use std::collections::HashSet;
use std::sync::Arc;

use futures::future::join_all;
use serde::{Deserialize, Serialize};

use super::{
    retrieve_similar_patients, web_search, KnowledgeError, PatientIndex, SearchProvider, SimilarPatient, SourceKind,
    WebSnippet,
};
use crate::domain::{bindings, PatientCase, PipelineConfig, ReasoningTrace, Stage, TemplateSet};
use crate::gateway::{AgentRole, ChatRequest, Gateway, RequestIds};
use crate::router::Embedder;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KnowledgeConfig {
    pub max_query_terms: usize,
    pub snippets_per_term: usize,
    /// Context document budget in tokens, approximated as 4 chars per token.
    pub context_token_budget: usize,
}

impl Default for KnowledgeConfig {
    fn default() -> Self {
        Self {
            max_query_terms: 3,
            snippets_per_term: 3,
            context_token_budget: 2000,
        }
    }
}

impl KnowledgeConfig {
    pub fn budget_chars(&self) -> usize {
        self.context_token_budget * 4
    }
}

/// Evidence gathered for one case.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBundle {
    pub snippets: Vec<WebSnippet>,
    /// Descending similarity; at most `retrieval_top_k`.
    pub similar_patients: Vec<SimilarPatient>,
    pub query_terms: Vec<String>,
    /// Human-readable notes for every source that failed or was skipped.
    pub degraded: Vec<String>,
}

impl KnowledgeBundle {
    pub fn is_empty(&self) -> bool {
        self.snippets.is_empty() && self.similar_patients.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProvenanceKind {
    GeneralWeb,
    ScholarlyIndex,
    BiomedicalIndex,
    ReferencePatient,
}

impl From<SourceKind> for ProvenanceKind {
    fn from(s: SourceKind) -> Self {
        match s {
            SourceKind::GeneralWeb => ProvenanceKind::GeneralWeb,
            SourceKind::ScholarlyIndex => ProvenanceKind::ScholarlyIndex,
            SourceKind::BiomedicalIndex => ProvenanceKind::BiomedicalIndex,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub kind: ProvenanceKind,
    /// URL for snippets, patient id for reference patients.
    pub reference: String,
    /// Tag used in the evidence listing, e.g. `S1` or `P2`.
    pub tag: String,
}

/// Synthesized context handed to the summary agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextDoc {
    pub text: String,
    pub provenance: Vec<Provenance>,
    pub no_evidence: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degraded: Vec<String>,
}

/// Search terms from an extractor reply.
///
/// Lines inside the first fenced block are used when a fence is present,
/// otherwise every line. Bullets, numbering and quotes are stripped and
/// duplicates (case-insensitive) dropped.
pub fn parse_query_terms(text: &str, max_terms: usize) -> Vec<String> {
    let lines: Vec<&str> = text.lines().collect();
    let fence_start = lines.iter().position(|l| l.trim_start().starts_with("```"));
    let body: Vec<&str> = match fence_start {
        Some(start) => lines[start + 1..]
            .iter()
            .take_while(|l| !l.trim_start().starts_with("```"))
            .copied()
            .collect(),
        None => lines,
    };
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for line in body {
        let mut t = line.trim();
        for bullet in ["- ", "* ", "• "] {
            if let Some(rest) = t.strip_prefix(bullet) {
                t = rest.trim();
            }
        }
        let digits = t.chars().take_while(|c| c.is_ascii_digit()).count();
        if digits > 0 {
            let rest = &t[digits..];
            if let Some(r) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
                t = r.trim();
            }
        }
        let t = t.trim_matches(|c| c == '"' || c == '\'' || c == '`').trim();
        if t.is_empty() {
            continue;
        }
        if seen.insert(t.to_lowercase()) {
            out.push(t.to_string());
        }
        if out.len() == max_terms {
            break;
        }
    }
    out
}

/// Knowledge extractor and knowledge manager.
#[derive(Clone)]
pub struct KnowledgeEngine {
    gateway: Arc<Gateway>,
    embedder: Arc<dyn Embedder>,
    providers: Vec<Arc<dyn SearchProvider>>,
    patients: Option<Arc<PatientIndex>>,
    templates: Arc<TemplateSet>,
    config: KnowledgeConfig,
}

impl std::fmt::Debug for KnowledgeEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KnowledgeEngine")
            .field("providers", &self.providers.iter().map(|p| p.name().to_string()).collect::<Vec<_>>())
            .field("patients", &self.patients.as_ref().map(|p| p.len()))
            .field("config", &self.config)
            .finish()
    }
}

impl KnowledgeEngine {
    pub fn new(gateway: Arc<Gateway>, embedder: Arc<dyn Embedder>, templates: Arc<TemplateSet>) -> Self {
        Self {
            gateway,
            embedder,
            providers: Vec::new(),
            patients: None,
            templates,
            config: KnowledgeConfig::default(),
        }
    }

    pub fn with_provider(mut self, provider: Arc<dyn SearchProvider>) -> Self {
        self.providers.push(provider);
        self
    }

    pub fn with_patients(mut self, index: Arc<PatientIndex>) -> Self {
        self.patients = Some(index);
        self
    }

    pub fn with_config(mut self, config: KnowledgeConfig) -> Self {
        self.config = config;
        self
    }

    pub fn config(&self) -> &KnowledgeConfig {
        &self.config
    }

    /// One extractor call for query terms, then web search per term and
    /// similar-patient retrieval. Source failures degrade the bundle; the
    /// call fails only when the extractor and every source fail together.
    pub async fn extract_knowledge(
        &self,
        case: &PatientCase,
        config: &PipelineConfig,
        trace: &mut ReasoningTrace,
        ids: &mut RequestIds,
    ) -> Result<KnowledgeBundle, KnowledgeError> {
        let mut bundle = KnowledgeBundle::default();
        let prompt = self.templates.knowledge_query.render(&bindings([
            ("phenotype_list", case.phenotype_list()),
            ("max_terms", self.config.max_query_terms.to_string()),
        ]))?;
        let request = ChatRequest::new(AgentRole::KnowledgeExtractor, ids.next(), prompt);
        let llm_error = match self.gateway.exchange(Stage::Extract, &request, trace).await {
            Ok(resp) => {
                bundle.query_terms = parse_query_terms(&resp.text, self.config.max_query_terms);
                if bundle.query_terms.is_empty() {
                    bundle.degraded.push("extractor reply contained no search terms; searching phenotypes".into());
                }
                None
            }
            Err(e) => {
                bundle.degraded.push(format!("knowledge extractor failed: {e}; searching phenotypes"));
                Some(e)
            }
        };
        if bundle.query_terms.is_empty() {
            bundle.query_terms = case
                .phenotypes
                .iter()
                .take(self.config.max_query_terms)
                .cloned()
                .collect();
        }

        let mut any_source_ok = false;

        if self.providers.is_empty() {
            bundle.degraded.push("web search disabled: no providers configured".into());
        } else {
            let limit = self.config.snippets_per_term;
            let calls = bundle.query_terms.iter().flat_map(|term| {
                self.providers
                    .iter()
                    .map(move |p| async move { (term.clone(), p.name().to_string(), web_search(p.as_ref(), term, limit).await) })
            });
            let results = join_all(calls).await;
            let mut seen_urls = HashSet::new();
            let mut per_term: Vec<(String, usize)> = Vec::new();
            for (term, provider, result) in results {
                match result {
                    Ok(hits) => {
                        any_source_ok = true;
                        let used = match per_term.iter_mut().find(|(t, _)| *t == term) {
                            Some((_, n)) => n,
                            None => {
                                per_term.push((term.clone(), 0));
                                &mut per_term.last_mut().unwrap().1
                            }
                        };
                        for hit in hits {
                            if *used >= limit {
                                break;
                            }
                            if seen_urls.insert(hit.url.clone()) {
                                bundle.snippets.push(hit);
                                *used += 1;
                            }
                        }
                    }
                    Err(e) => bundle.degraded.push(format!("search {provider} for {term:?} failed: {e}")),
                }
            }
        }

        match &self.patients {
            None => bundle.degraded.push("patient retrieval disabled: no reference index".into()),
            Some(index) => {
                match retrieve_similar_patients(index, self.embedder.as_ref(), case, config.retrieval_top_k).await {
                    Ok(similar) => {
                        any_source_ok = true;
                        bundle.similar_patients = similar;
                    }
                    Err(e) => bundle.degraded.push(format!("patient retrieval failed: {e}")),
                }
            }
        }

        if let Some(e) = llm_error {
            if !any_source_ok {
                return Err(KnowledgeError::AllSourcesFailed(e.to_string()));
            }
        }
        for note in &bundle.degraded {
            trace.note(note.clone());
        }
        Ok(bundle)
    }

    /// One knowledge-manager call over the bundle, even when it is empty.
    pub async fn synthesize_context(
        &self,
        case: &PatientCase,
        bundle: &KnowledgeBundle,
        trace: &mut ReasoningTrace,
        ids: &mut RequestIds,
    ) -> Result<ContextDoc, KnowledgeError> {
        let (evidence, provenance) = render_evidence(bundle);
        let budget = self.config.budget_chars();
        let prompt = self.templates.knowledge_manager.render(&bindings([
            ("phenotype_list", case.phenotype_list()),
            ("evidence", evidence),
            ("budget_chars", budget.to_string()),
        ]))?;
        let request = ChatRequest::new(AgentRole::KnowledgeManager, ids.next(), prompt);
        let resp = self.gateway.exchange(Stage::Manage, &request, trace).await?;
        let mut text = resp.text.trim().to_string();
        let mut degraded = bundle.degraded.clone();
        if text.chars().count() > budget {
            text = text.chars().take(budget).collect();
            degraded.push(format!("context truncated to {budget} characters"));
            trace.note(format!("context truncated to {budget} characters"));
        }
        Ok(ContextDoc {
            text,
            provenance,
            no_evidence: bundle.is_empty(),
            degraded,
        })
    }
}

fn render_evidence(bundle: &KnowledgeBundle) -> (String, Vec<Provenance>) {
    if bundle.is_empty() {
        return ("No external evidence was retrieved.".to_string(), Vec::new());
    }
    let mut lines = Vec::new();
    let mut provenance = Vec::new();
    for (i, s) in bundle.snippets.iter().enumerate() {
        let tag = format!("S{}", i + 1);
        lines.push(format!("[{tag}] {} <{}>\n{}", s.title, s.url, s.snippet_text));
        provenance.push(Provenance {
            kind: s.source.into(),
            reference: s.url.to_string(),
            tag,
        });
    }
    for (i, p) in bundle.similar_patients.iter().enumerate() {
        let tag = format!("P{}", i + 1);
        lines.push(format!(
            "[{tag}] Similar patient {} (similarity {:.3}), diagnosis: {}; phenotypes: {}",
            p.patient.id,
            p.similarity,
            p.patient.diagnosis,
            p.patient.phenotypes.join("; ")
        ));
        provenance.push(Provenance {
            kind: ProvenanceKind::ReferencePatient,
            reference: p.patient.id.clone(),
            tag,
        });
    }
    (lines.join("\n"), provenance)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fenced_terms() {
        let reply = "Here you go:\n```\n- distal arthrogryposis\n2. \"TTN\"\n\ncontractures\nextra\n```\nignored";
        assert_eq!(parse_query_terms(reply, 3), ["distal arthrogryposis", "TTN", "contractures"]);
    }

    #[test]
    fn unfenced_terms_and_dedupe() {
        assert_eq!(parse_query_terms("Kabuki\nkabuki\n* KMT2D", 5), ["Kabuki", "KMT2D"]);
        assert!(parse_query_terms("```\n```", 3).is_empty());
    }
}
