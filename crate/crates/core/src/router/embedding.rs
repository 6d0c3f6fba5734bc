use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use url::Url;

use super::RouterError;
use crate::domain::PatientCase;

/// Dense vector with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = RouterError;
    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, RouterError> {
        if values.iter().any(|x| !x.is_finite()) {
            return Err(RouterError::NonFinite);
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    /// Cosine similarity; zero when either vector has zero norm.
    pub fn cosine(&self, other: &Self) -> f64 {
        let denom = self.norm() * other.norm();
        if denom == 0.0 {
            0.0
        } else {
            (self.dot(other) / denom).clamp(-1.0, 1.0)
        }
    }

    pub fn euclidean(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(self.0.iter().map(|x| x * c).collect())
    }
}

/// Turns case text into vectors. The same embedder backs routing and
/// similar-patient retrieval.
#[async_trait]
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    async fn embed_text(&self, text: &str) -> Result<EmbeddingVector, RouterError>;
}

/// Text an embedder sees for a case: the phenotypes joined with `"; "`.
pub fn case_text(case: &PatientCase) -> String {
    case.phenotype_list()
}

pub async fn embed_case(embedder: &dyn Embedder, case: &PatientCase) -> Result<EmbeddingVector, RouterError> {
    embedder.embed_text(&case_text(case)).await
}

pub const DEFAULT_DIM: usize = 256;

/// Offline feature-hashing embedder.
///
/// Lowercased alphanumeric tokens are hashed (FNV-1a, 64-bit) into `dim`
/// buckets with a ±1 sign taken from a high hash bit; the result is
/// L2-normalized. Text with no tokens, or whose tokens cancel exactly,
/// embeds to the zero vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEmbedder {
    dim: usize,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self { dim: DEFAULT_DIM }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Result<Self, RouterError> {
        if dim == 0 {
            return Err(RouterError::InvalidModel("embedding dimension must be positive".into()));
        }
        Ok(Self { dim })
    }

    pub fn embed(&self, text: &str) -> EmbeddingVector {
        let mut v = vec![0.0; self.dim];
        let lowered = text.to_lowercase();
        for token in lowered.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            let h = fnv1a(token.as_bytes());
            let bucket = (h % self.dim as u64) as usize;
            let sign = if (h >> 63) == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in &mut v {
                *x /= norm;
            }
        }
        EmbeddingVector(v)
    }
}

#[async_trait]
impl Embedder for HashingEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    async fn embed_text(&self, text: &str) -> Result<EmbeddingVector, RouterError> {
        Ok(self.embed(text))
    }
}

/// Live embedding backend: `POST <base>/embeddings {model, input}` reading
/// `data[0].embedding`.
pub struct HttpEmbedder {
    endpoint: Url,
    model: String,
    dim: usize,
    api_key: Option<String>,
    client: reqwest::Client,
}

impl std::fmt::Debug for HttpEmbedder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpEmbedder")
            .field("endpoint", &self.endpoint.as_str())
            .field("model", &self.model)
            .field("dim", &self.dim)
            .finish()
    }
}

impl HttpEmbedder {
    pub fn new(base_url: &Url, model: &str, dim: usize, api_key: Option<String>) -> Result<Self, RouterError> {
        let mut base = base_url.clone();
        if !base.path().ends_with('/') {
            base.set_path(&format!("{}/", base.path()));
        }
        let endpoint = base
            .join("embeddings")
            .map_err(|e| RouterError::InvalidModel(e.to_string()))?;
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| RouterError::EmbeddingBackendUnavailable(e.to_string()))?;
        Ok(Self {
            endpoint,
            model: model.to_string(),
            dim,
            api_key,
            client,
        })
    }
}

#[async_trait]
impl Embedder for HttpEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    async fn embed_text(&self, text: &str) -> Result<EmbeddingVector, RouterError> {
        #[derive(Deserialize)]
        struct Item {
            embedding: Vec<f64>,
        }
        #[derive(Deserialize)]
        struct Resp {
            data: Vec<Item>,
        }
        let unavailable = |e: String| RouterError::EmbeddingBackendUnavailable(e);
        let mut call = self
            .client
            .post(self.endpoint.clone())
            .json(&serde_json::json!({ "model": self.model, "input": text }));
        if let Some(key) = &self.api_key {
            call = call.bearer_auth(key);
        }
        let resp = call.send().await.map_err(|e| unavailable(e.without_url().to_string()))?;
        if !resp.status().is_success() {
            return Err(unavailable(format!("HTTP {}", resp.status().as_u16())));
        }
        let body: Resp = resp.json().await.map_err(|e| unavailable(e.without_url().to_string()))?;
        let values = body
            .data
            .into_iter()
            .next()
            .ok_or_else(|| unavailable("empty embedding response".into()))?
            .embedding;
        if values.len() != self.dim {
            return Err(RouterError::DimensionMismatch {
                expected: self.dim,
                got: values.len(),
            });
        }
        EmbeddingVector::new(values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn deterministic() {
        let e = HashingEmbedder::default();
        assert_eq!(e.embed("hypotonia; seizures"), e.embed("hypotonia; seizures"));
        assert_eq!(e.embed("Hypotonia"), e.embed("hypotonia"));
    }

    #[test]
    fn single_token_is_one_hot() {
        let e = HashingEmbedder::new(4).unwrap();
        let v = e.embed("arthrogryposis");
        let nonzero: Vec<f64> = v.values().iter().copied().filter(|x| *x != 0.0).collect();
        assert_eq!(nonzero.len(), 1);
        assert_eq!(nonzero[0].abs(), 1.0);
    }

    #[test]
    fn random_strings_have_unit_norm() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let e = HashingEmbedder::default();
        let words = ["short", "stature", "seizure", "hypotonia", "ptosis", "cleft", "palate", "ataxia"];
        for _ in 0..50 {
            let n = rng.random_range(1..8);
            let text: Vec<&str> = (0..n).map(|_| words[rng.random_range(0..words.len())]).collect();
            let v = e.embed(&text.join(" "));
            // Independent norm computation.
            let mut sq = 0.0f64;
            for x in v.values() {
                sq += x * x;
            }
            assert!((sq.sqrt() - 1.0).abs() < 1e-9, "{text:?}");
        }
    }

    #[test]
    fn punctuation_only_is_zero() {
        let v = HashingEmbedder::default().embed(" ;,- ");
        assert_eq!(v.norm(), 0.0);
        assert_eq!(v.cosine(&v), 0.0);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(EmbeddingVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(serde_json::from_str::<EmbeddingVector>("[1.0, 2.0]").is_ok());
    }
}
