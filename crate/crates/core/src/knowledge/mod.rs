//! Evidence gathering (web search and similar-patient retrieval) and
//! synthesis of that evidence into a context document.

mod extract;
mod patients;
mod search;

pub use extract::{
    parse_query_terms, ContextDoc, KnowledgeBundle, KnowledgeConfig, KnowledgeEngine, Provenance, ProvenanceKind,
};
pub use patients::{
    index_reference_patients, retrieve_similar_patients, PatientIndex, ReferencePatient, ReferencePatientRecord,
    SimilarPatient,
};
pub use search::{web_search, FixtureDoc, FixtureSearch, HttpSearch, SearchProvider, SourceKind, WebSnippet};

use thiserror::Error;

use crate::domain::DomainError;
use crate::gateway::GatewayError;
use crate::router::RouterError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KnowledgeError {
    #[error("search query is empty")]
    EmptyQuery,
    #[error("search provider {provider} unavailable: {message}")]
    SearchProviderUnavailable { provider: String, message: String },
    #[error("duplicate reference patient id {0}")]
    DuplicateId(String),
    #[error("invalid reference patient {id}: {message}")]
    InvalidPatient { id: String, message: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("retrieval k must be at least 1")]
    InvalidK,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("knowledge extraction failed: extractor error ({0}) and no source succeeded")]
    AllSourcesFailed(String),
    #[error(transparent)]
    Embedding(#[from] RouterError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Template(#[from] DomainError),
}
