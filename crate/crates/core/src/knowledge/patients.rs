use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::KnowledgeError;
use crate::domain::PatientCase;
use crate::router::{embed_case, Embedder, EmbeddingVector};

/// A diagnosed patient from a reference database.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePatient {
    pub id: String,
    pub phenotypes: Vec<String>,
    pub diagnosis: String,
    pub embedding: EmbeddingVector,
}

/// One JSON line of a reference-patient file: `{id, phenotypes:[...], diagnosis}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferencePatientRecord {
    pub id: String,
    pub phenotypes: Vec<String>,
    pub diagnosis: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarPatient {
    pub patient: ReferencePatient,
    /// Cosine similarity in `[-1, 1]`.
    pub similarity: f64,
}

/// Immutable store of reference patients for top-K cosine retrieval.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PatientIndex {
    dim: Option<usize>,
    patients: Vec<ReferencePatient>,
}

pub fn index_reference_patients(records: Vec<ReferencePatient>) -> Result<PatientIndex, KnowledgeError> {
    let mut seen = HashSet::new();
    let dim = records.first().map(|p| p.embedding.dim());
    for p in &records {
        if !seen.insert(p.id.clone()) {
            return Err(KnowledgeError::DuplicateId(p.id.clone()));
        }
        if p.diagnosis.trim().is_empty() {
            return Err(KnowledgeError::InvalidPatient {
                id: p.id.clone(),
                message: "diagnosis must not be empty".into(),
            });
        }
        if Some(p.embedding.dim()) != dim {
            return Err(KnowledgeError::DimensionMismatch {
                expected: dim.unwrap_or(0),
                got: p.embedding.dim(),
            });
        }
    }
    Ok(PatientIndex {
        dim,
        patients: records,
    })
}

impl PatientIndex {
    pub fn len(&self) -> usize {
        self.patients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patients.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn patients(&self) -> &[ReferencePatient] {
        &self.patients
    }

    /// Top `k` by descending cosine similarity; equal similarities keep index order.
    pub fn retrieve(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<SimilarPatient>, KnowledgeError> {
        if k == 0 {
            return Err(KnowledgeError::InvalidK);
        }
        if let Some(dim) = self.dim {
            if query.dim() != dim {
                return Err(KnowledgeError::DimensionMismatch {
                    expected: dim,
                    got: query.dim(),
                });
            }
        }
        let mut scored: Vec<(f64, usize)> = self
            .patients
            .iter()
            .enumerate()
            .map(|(i, p)| (query.cosine(&p.embedding), i))
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(similarity, i)| SimilarPatient {
                patient: self.patients[i].clone(),
                similarity,
            })
            .collect())
    }

    /// Reads `{id, phenotypes, diagnosis}` JSON lines and embeds each patient.
    pub async fn load(path: &Path, embedder: &dyn Embedder) -> Result<Self, KnowledgeError> {
        let text = std::fs::read_to_string(path).map_err(|e| KnowledgeError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r: ReferencePatientRecord = serde_json::from_str(line).map_err(|e| KnowledgeError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            records.push(r);
        }
        Self::from_records(records, embedder).await
    }

    pub async fn from_records(
        records: Vec<ReferencePatientRecord>,
        embedder: &dyn Embedder,
    ) -> Result<Self, KnowledgeError> {
        let mut patients = Vec::with_capacity(records.len());
        for r in records {
            let case = PatientCase::new(r.id.clone(), r.phenotypes.clone());
            let embedding = embed_case(embedder, &case).await?;
            patients.push(ReferencePatient {
                id: r.id,
                phenotypes: r.phenotypes,
                diagnosis: r.diagnosis,
                embedding,
            });
        }
        index_reference_patients(patients)
    }
}

/// Embeds `case` and returns its `k` most similar reference patients.
pub async fn retrieve_similar_patients(
    index: &PatientIndex,
    embedder: &dyn Embedder,
    case: &PatientCase,
    k: usize,
) -> Result<Vec<SimilarPatient>, KnowledgeError> {
    if index.is_empty() {
        return if k == 0 { Err(KnowledgeError::InvalidK) } else { Ok(Vec::new()) };
    }
    let query = embed_case(embedder, case).await?;
    index.retrieve(&query, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::router::HashingEmbedder;

    fn patient(id: &str, v: &[f64]) -> ReferencePatient {
        ReferencePatient {
            id: id.into(),
            phenotypes: vec!["x".into()],
            diagnosis: "dx".into(),
            embedding: EmbeddingVector::new(v.to_vec()).unwrap(),
        }
    }

    #[test]
    fn empty_index_retrieves_nothing() {
        let idx = index_reference_patients(vec![]).unwrap();
        assert!(idx.is_empty());
        let q = EmbeddingVector::new(vec![1.0, 0.0]).unwrap();
        assert!(idx.retrieve(&q, 5).unwrap().is_empty());
    }

    #[test]
    fn build_errors() {
        assert_eq!(
            index_reference_patients(vec![patient("a", &[1.0]), patient("b", &[1.0]), patient("c", &[0.5])])
                .unwrap()
                .len(),
            3
        );
        assert_eq!(
            index_reference_patients(vec![patient("a", &[1.0]), patient("a", &[0.0])]),
            Err(KnowledgeError::DuplicateId("a".into()))
        );
        assert!(matches!(
            index_reference_patients(vec![patient("a", &[1.0]), patient("b", &[1.0, 0.0])]),
            Err(KnowledgeError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn truncates_to_index_size() {
        let idx = index_reference_patients(vec![patient("a", &[1.0, 0.0]), patient("b", &[0.0, 1.0])]).unwrap();
        let q = EmbeddingVector::new(vec![1.0, 1.0]).unwrap();
        assert_eq!(idx.retrieve(&q, 10).unwrap().len(), 2);
    }

    #[tokio::test]
    async fn self_similarity_first() {
        let e = HashingEmbedder::default();
        let records = vec![
            ReferencePatientRecord { id: "p1".into(), phenotypes: vec!["ptosis".into(), "cleft palate".into()], diagnosis: "A".into() },
            ReferencePatientRecord { id: "p2".into(), phenotypes: vec!["arthrogryposis".into(), "contractures".into()], diagnosis: "Distal arthrogryposis, type 10".into() },
            ReferencePatientRecord { id: "p3".into(), phenotypes: vec!["seizures".into()], diagnosis: "C".into() },
        ];
        let idx = PatientIndex::from_records(records, &e).await.unwrap();
        let case = PatientCase::new("q", ["arthrogryposis", "contractures"]);
        let hits = retrieve_similar_patients(&idx, &e, &case, 5).await.unwrap();
        assert_eq!(hits[0].patient.id, "p2");
        assert!((hits[0].similarity - 1.0).abs() < 1e-9);
        assert!(hits.windows(2).all(|w| w[0].similarity >= w[1].similarity));
    }
}
