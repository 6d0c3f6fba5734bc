//! Shipped prompt templates.
//!
//! The diagnosis, gene-prioritization and error-detection prompts are kept
//! verbatim in `templates/*.txt`. The remaining templates (knowledge query,
//! knowledge manager, summary answer format, in-loop verification) are
//! non-normative defaults and can be overridden from a directory.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DomainError, PatientCase, PromptTemplate, TaskKind};

pub const DIAGNOSIS: &str = include_str!("../../templates/diagnosis.txt");
pub const GENE_PRIORITIZATION: &str = include_str!("../../templates/gene_prioritization.txt");
pub const ERROR_DETECTION: &str = include_str!("../../templates/error_detection.txt");
pub const KNOWLEDGE_QUERY: &str = include_str!("../../templates/knowledge_query.txt");
pub const KNOWLEDGE_MANAGER: &str = include_str!("../../templates/knowledge_manager.txt");
pub const SUMMARY_ANSWER: &str = include_str!("../../templates/summary_answer.txt");
pub const VERIFY_ANSWER: &str = include_str!("../../templates/verify_answer.txt");

fn builtin(name: &str, text: &str) -> PromptTemplate {
    PromptTemplate::new(name, text).expect("shipped template parses")
}

pub fn diagnosis() -> PromptTemplate {
    builtin("diagnosis", DIAGNOSIS)
}

pub fn gene_prioritization() -> PromptTemplate {
    builtin("gene_prioritization", GENE_PRIORITIZATION)
}

pub fn error_detection() -> PromptTemplate {
    builtin("error_detection", ERROR_DETECTION)
}

/// The full set of templates a pipeline run uses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateSet {
    pub diagnosis: PromptTemplate,
    pub gene_prioritization: PromptTemplate,
    pub error_detection: PromptTemplate,
    pub knowledge_query: PromptTemplate,
    pub knowledge_manager: PromptTemplate,
    pub summary_answer: PromptTemplate,
    pub verify_answer: PromptTemplate,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self {
            diagnosis: diagnosis(),
            gene_prioritization: gene_prioritization(),
            error_detection: error_detection(),
            knowledge_query: builtin("knowledge_query", KNOWLEDGE_QUERY),
            knowledge_manager: builtin("knowledge_manager", KNOWLEDGE_MANAGER),
            summary_answer: builtin("summary_answer", SUMMARY_ANSWER),
            verify_answer: builtin("verify_answer", VERIFY_ANSWER),
        }
    }
}

impl TemplateSet {
    /// Loads the defaults, replacing any template for which `<dir>/<name>.txt` exists.
    pub fn from_dir(dir: &Path) -> Result<Self, DomainError> {
        let mut set = Self::default();
        let slots: [&mut PromptTemplate; 7] = [
            &mut set.diagnosis,
            &mut set.gene_prioritization,
            &mut set.error_detection,
            &mut set.knowledge_query,
            &mut set.knowledge_manager,
            &mut set.summary_answer,
            &mut set.verify_answer,
        ];
        for slot in slots {
            let path = dir.join(format!("{}.txt", slot.name()));
            if path.exists() {
                let text = std::fs::read_to_string(&path).map_err(|e| DomainError::TemplateIo {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
                *slot = PromptTemplate::new(slot.name().to_string(), text)?;
            }
        }
        Ok(set)
    }

    /// Task prompt for a case. For diagnosis, gene findings and clinical notes
    /// follow the templated sentence as labeled lines; the gene prompt carries
    /// phenotypes only.
    pub fn task_prompt(&self, kind: TaskKind, case: &PatientCase) -> Result<String, DomainError> {
        let template = match kind {
            TaskKind::Diagnose => &self.diagnosis,
            TaskKind::PrioritizeGenes => &self.gene_prioritization,
            TaskKind::VerifyDiagnosis => {
                return Err(DomainError::InvalidField {
                    field: "kind".into(),
                    message: "verification uses the error-detection template".into(),
                })
            }
        };
        let mut prompt =
            template.render(&super::bindings([("phenotype_list", case.phenotype_list())]))?;
        if kind == TaskKind::Diagnose {
            if let Some(genes) = case.genes.as_ref().filter(|g| !g.is_empty()) {
                let listed: Vec<String> = genes
                    .iter()
                    .map(|g| match &g.note {
                        Some(note) => format!("{} ({note})", g.symbol),
                        None => g.symbol.clone(),
                    })
                    .collect();
                prompt.push_str("\nKnown gene findings: ");
                prompt.push_str(&listed.join("; "));
            }
            if let Some(notes) = &case.record_text {
                prompt.push_str("\nClinical notes: ");
                prompt.push_str(notes);
            }
        }
        Ok(prompt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::GeneFinding;

    #[test]
    fn genes_and_notes_follow_the_sentence() {
        let case = PatientCase::new("c", ["hypotonia", "seizures"])
            .with_genes(vec![
                GeneFinding::new("NALCN"),
                GeneFinding {
                    symbol: "TTN".into(),
                    note: Some("VUS".into()),
                },
            ])
            .with_record_text("two affected siblings");
        let p = TemplateSet::default()
            .task_prompt(TaskKind::Diagnose, &case)
            .unwrap();
        let lines: Vec<&str> = p.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("Make diagnosis for this patient."));
        assert_eq!(lines[1], "Known gene findings: NALCN; TTN (VUS)");
        assert_eq!(lines[2], "Clinical notes: two affected siblings");
    }

    #[test]
    fn gene_task_does_not_leak_gene_findings() {
        let case = PatientCase::new("c", ["hypotonia"]).with_genes(vec![GeneFinding::new("NALCN")]);
        let p = TemplateSet::default()
            .task_prompt(TaskKind::PrioritizeGenes, &case)
            .unwrap();
        assert!(!p.contains("NALCN"));
    }

    #[test]
    fn overrides_from_dir() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("verify_answer.txt"), "check {question} {answer} {confidence}").unwrap();
        let set = TemplateSet::from_dir(dir.path()).unwrap();
        assert_eq!(set.verify_answer.template_text(), "check {question} {answer} {confidence}");
        assert_eq!(set.diagnosis, diagnosis());
    }
}
