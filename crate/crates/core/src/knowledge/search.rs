use std::collections::HashSet;
use std::path::Path;
use std::time::Duration;

use async_trait::async_trait;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use url::Url;

use super::KnowledgeError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    #[serde(alias = "web", alias = "google")]
    GeneralWeb,
    #[serde(alias = "scholar", alias = "google_scholar")]
    ScholarlyIndex,
    #[serde(alias = "pubmed")]
    BiomedicalIndex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WebSnippet {
    pub title: String,
    pub url: Url,
    pub snippet_text: String,
    pub source: SourceKind,
    /// `None` for fixture results, which are never fetched.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fetched_at: Option<DateTime<Utc>>,
}

#[async_trait]
pub trait SearchProvider: Send + Sync {
    fn name(&self) -> &str;
    async fn search(&self, query: &str, limit: usize) -> Result<Vec<WebSnippet>, KnowledgeError>;
}

/// Validates the query, then delegates to the provider.
pub async fn web_search(
    provider: &dyn SearchProvider,
    query: &str,
    limit: usize,
) -> Result<Vec<WebSnippet>, KnowledgeError> {
    if query.trim().is_empty() {
        return Err(KnowledgeError::EmptyQuery);
    }
    if limit == 0 {
        return Ok(Vec::new());
    }
    let mut hits = provider.search(query.trim(), limit).await?;
    hits.truncate(limit);
    Ok(hits)
}

fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// One line of a fixture corpus: `{title, url, text, source}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureDoc {
    pub title: String,
    pub url: Url,
    pub text: String,
    pub source: SourceKind,
}

/// Keyword search over a local corpus. A document matches when every query
/// token occurs among its title and text tokens; hits keep corpus order.
#[derive(Debug, Clone)]
pub struct FixtureSearch {
    name: String,
    docs: Vec<(FixtureDoc, HashSet<String>)>,
    snippet_chars: usize,
}

impl FixtureSearch {
    pub fn new(name: impl Into<String>, docs: Vec<FixtureDoc>) -> Result<Self, KnowledgeError> {
        let mut indexed = Vec::with_capacity(docs.len());
        for (i, d) in docs.into_iter().enumerate() {
            if d.text.trim().is_empty() {
                return Err(KnowledgeError::Parse {
                    line: i + 1,
                    message: "fixture document text is empty".into(),
                });
            }
            let toks = tokens(&d.title).chain(tokens(&d.text)).collect();
            indexed.push((d, toks));
        }
        Ok(Self {
            name: name.into(),
            docs: indexed,
            snippet_chars: 500,
        })
    }

    pub fn load(name: impl Into<String>, path: &Path) -> Result<Self, KnowledgeError> {
        let text = std::fs::read_to_string(path).map_err(|e| KnowledgeError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut docs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let doc: FixtureDoc = serde_json::from_str(line).map_err(|e| KnowledgeError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            docs.push(doc);
        }
        Self::new(name, docs)
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

#[async_trait]
impl SearchProvider for FixtureSearch {
    fn name(&self) -> &str {
        &self.name
    }

    async fn search(&self, query: &str, limit: usize) -> Result<Vec<WebSnippet>, KnowledgeError> {
        let wanted: Vec<String> = tokens(query).collect();
        if wanted.is_empty() {
            return Ok(Vec::new());
        }
        Ok(self
            .docs
            .iter()
            .filter(|(_, toks)| wanted.iter().all(|w| toks.contains(w)))
            .take(limit)
            .map(|(d, _)| WebSnippet {
                title: d.title.clone(),
                url: d.url.clone(),
                snippet_text: d.text.chars().take(self.snippet_chars).collect(),
                source: d.source,
                fetched_at: None,
            })
            .collect())
    }
}

/// JSON search service: `GET <endpoint>?q=<query>&limit=<n>` returning
/// `[{title, url, text}]`. All results are tagged with one source kind.
#[derive(Debug, Clone)]
pub struct HttpSearch {
    name: String,
    endpoint: Url,
    source: SourceKind,
    client: reqwest::Client,
}

impl HttpSearch {
    pub fn new(name: impl Into<String>, endpoint: Url, source: SourceKind) -> Result<Self, KnowledgeError> {
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(20))
            .build()
            .map_err(|e| KnowledgeError::SearchProviderUnavailable {
                provider: "http".into(),
                message: e.to_string(),
            })?;
        Ok(Self {
            name: name.into(),
            endpoint,
            source,
            client,
        })
    }
}

#[async_trait]
impl SearchProvider for HttpSearch {
    fn name(&self) -> &str {
        &self.name
    }

    async fn search(&self, query: &str, limit: usize) -> Result<Vec<WebSnippet>, KnowledgeError> {
        #[derive(Deserialize)]
        struct Hit {
            title: String,
            url: Url,
            #[serde(alias = "snippet")]
            text: String,
        }
        let unavailable = |message: String| KnowledgeError::SearchProviderUnavailable {
            provider: self.name.clone(),
            message,
        };
        let mut url = self.endpoint.clone();
        url.query_pairs_mut()
            .append_pair("q", query)
            .append_pair("limit", &limit.to_string());
        let resp = self
            .client
            .get(url)
            .send()
            .await
            .map_err(|e| unavailable(e.without_url().to_string()))?;
        if !resp.status().is_success() {
            return Err(unavailable(format!("HTTP {}", resp.status().as_u16())));
        }
        let hits: Vec<Hit> = resp.json().await.map_err(|e| unavailable(e.without_url().to_string()))?;
        let now = Utc::now();
        Ok(hits
            .into_iter()
            .filter(|h| !h.text.trim().is_empty())
            .take(limit)
            .map(|h| WebSnippet {
                title: h.title,
                url: h.url,
                snippet_text: h.text,
                source: self.source,
                fetched_at: Some(now),
            })
            .collect())
    }
}
