//! Common-vs-rare routing with a KNN classifier over case embeddings.

mod embedding;
mod knn;

pub use embedding::{case_text, embed_case, Embedder, EmbeddingVector, HashingEmbedder, HttpEmbedder, DEFAULT_DIM};
pub use knn::{
    evaluate_router, fit_router, Metric, ReferencePoint, RouteDecision, RouteLabel, RouterEvaluation, RouterModel,
};

use thiserror::Error;

use crate::domain::{PatientCase, Route};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RouterError {
    #[error("router training set is empty")]
    EmptyTrainingSet,
    #[error("knn_k={k} is invalid for {n} reference point(s)")]
    KTooLarge { k: usize, n: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding contains a non-finite value")]
    NonFinite,
    #[error("embedding backend unavailable: {0}")]
    EmbeddingBackendUnavailable(String),
    #[error("invalid router model: {0}")]
    InvalidModel(String),
    #[error("router model I/O: {0}")]
    Io(String),
}

/// How the pipeline picks a branch.
#[derive(Debug, Clone, PartialEq)]
pub enum Router {
    /// Classify the embedded case with a fitted model.
    Knn(RouterModel),
    /// Always use one label; for deployments without a trained model.
    Fixed(RouteLabel),
}

impl Router {
    pub async fn decide(&self, embedder: &dyn Embedder, case: &PatientCase) -> Result<RouteDecision, RouterError> {
        match self {
            Router::Knn(model) => {
                let v = embed_case(embedder, case).await?;
                model.classify(&v)
            }
            Router::Fixed(label) => Ok(RouteDecision {
                label: label.clone(),
                score: 1.0,
                neighbor_ids: Vec::new(),
            }),
        }
    }

    pub fn fixed(route: Route) -> Self {
        match route {
            Route::Common => Router::Fixed(RouteLabel::common()),
            Route::Rare => Router::Fixed(RouteLabel::rare()),
        }
    }
}
