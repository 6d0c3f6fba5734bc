use serde::{Deserialize, Serialize};

use super::DomainError;

/// A gene finding attached to a case, e.g. a symbol reported by a genetic test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneFinding {
    pub symbol: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl GeneFinding {
    pub fn new(symbol: impl Into<String>) -> Self {
        Self {
            symbol: symbol.into(),
            note: None,
        }
    }
}

/// The unit of input: free-text phenotypes plus optional gene findings and notes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientCase {
    pub id: String,
    pub phenotypes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub genes: Option<Vec<GeneFinding>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_tag: Option<String>,
}

impl PatientCase {
    pub fn new<I, S>(id: impl Into<String>, phenotypes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            id: id.into(),
            phenotypes: phenotypes.into_iter().map(Into::into).collect(),
            genes: None,
            record_text: None,
            source_tag: None,
        }
    }

    pub fn with_genes(mut self, genes: Vec<GeneFinding>) -> Self {
        self.genes = Some(genes);
        self
    }

    pub fn with_record_text(mut self, text: impl Into<String>) -> Self {
        self.record_text = Some(text.into());
        self
    }

    /// Phenotypes joined with `"; "` in input order.
    pub fn phenotype_list(&self) -> String {
        self.phenotypes.join("; ")
    }
}

fn trimmed_opt(value: Option<String>) -> Option<String> {
    value
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
}

/// Normalizes whitespace in a case and rejects cases that cannot be run.
///
/// Strings are trimmed, blank phenotypes dropped, and empty optional fields
/// collapsed to `None`. Gene symbols that are blank after trimming are an
/// error rather than being dropped, since they usually indicate a malformed
/// upstream record.
pub fn validate_case(case: PatientCase) -> Result<PatientCase, DomainError> {
    let id = case.id.trim().to_string();
    if id.is_empty() {
        return Err(DomainError::InvalidField {
            field: "id".into(),
            message: "case id must not be empty".into(),
        });
    }

    let phenotypes: Vec<String> = case
        .phenotypes
        .into_iter()
        .map(|p| p.trim().to_string())
        .filter(|p| !p.is_empty())
        .collect();
    if phenotypes.is_empty() {
        return Err(DomainError::EmptyCase);
    }

    let genes = match case.genes {
        None => None,
        Some(genes) => {
            let mut out = Vec::with_capacity(genes.len());
            for (i, g) in genes.into_iter().enumerate() {
                let symbol = g.symbol.trim().to_string();
                if symbol.is_empty() {
                    return Err(DomainError::InvalidField {
                        field: format!("genes[{i}].symbol"),
                        message: "gene symbol must not be empty".into(),
                    });
                }
                out.push(GeneFinding {
                    symbol,
                    note: trimmed_opt(g.note),
                });
            }
            if out.is_empty() {
                None
            } else {
                Some(out)
            }
        }
    };

    Ok(PatientCase {
        id,
        phenotypes,
        genes,
        record_text: trimmed_opt(case.record_text),
        source_tag: trimmed_opt(case.source_tag),
    })
}
