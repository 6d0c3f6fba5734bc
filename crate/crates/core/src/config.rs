//! TOML application configuration and construction of a ready orchestrator.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::domain::{PipelineConfig, TemplateSet};
use crate::evaluation::{Normalizer, SynonymTable};
use crate::gateway::{AgentRole, Gateway, HttpChatBackend, Script, ScriptedBackend};
use crate::knowledge::{FixtureSearch, HttpSearch, KnowledgeConfig, KnowledgeEngine, PatientIndex, SourceKind};
use crate::orchestrator::Orchestrator;
use crate::router::{Embedder, HashingEmbedder, HttpEmbedder, RouteLabel, Router, RouterModel, DEFAULT_DIM};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("cannot load {what}: {message}")]
    Load { what: String, message: String },
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

fn load_err(what: impl Into<String>, e: impl ToString) -> ConfigError {
    ConfigError::Load {
        what: what.into(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendConfig {
    /// Chat-completion endpoint; the key comes from `key_env` or
    /// `HYGIEIA_BACKEND_<NAME>_KEY`.
    Http {
        base_url: Url,
        #[serde(default)]
        model: Option<String>,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
        #[serde(default)]
        key_env: Option<String>,
    },
    /// Replays a script file.
    Scripted { script: PathBuf },
}

fn default_timeout_secs() -> u64 {
    60
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleBindingConfig {
    pub backend: String,
    #[serde(default)]
    pub model: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolesConfig {
    pub default: Option<RoleBindingConfig>,
    pub router: Option<RoleBindingConfig>,
    pub knowledge_extractor: Option<RoleBindingConfig>,
    pub knowledge_manager: Option<RoleBindingConfig>,
    pub summary: Option<RoleBindingConfig>,
    pub verifier: Option<RoleBindingConfig>,
}

impl RolesConfig {
    fn get(&self, role: AgentRole) -> Option<&RoleBindingConfig> {
        match role {
            AgentRole::Router => self.router.as_ref(),
            AgentRole::KnowledgeExtractor => self.knowledge_extractor.as_ref(),
            AgentRole::KnowledgeManager => self.knowledge_manager.as_ref(),
            AgentRole::Summary => self.summary.as_ref(),
            AgentRole::Verifier => self.verifier.as_ref(),
        }
        .or(self.default.as_ref())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RouterConfig {
    /// Fitted model file.
    pub model: Option<PathBuf>,
    /// Constant route label used when no model is given; defaults to `Rare`.
    pub fixed: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub dim: usize,
    /// Embedding endpoint; the offline hashing embedder is used when absent.
    pub base_url: Option<Url>,
    pub model: String,
    pub key_env: Option<String>,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            dim: DEFAULT_DIM,
            base_url: None,
            model: "text-embedding".into(),
            key_env: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SearchConfig {
    Fixture { name: String, path: PathBuf },
    Http { name: String, url: Url, source: SourceKind },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnowledgeSection {
    pub search: Vec<SearchConfig>,
    /// Reference patients as JSON Lines.
    pub patients: Option<PathBuf>,
    pub max_query_terms: Option<usize>,
    pub snippets_per_term: Option<usize>,
    pub context_token_budget: Option<usize>,
}

impl KnowledgeSection {
    pub fn limits(&self) -> KnowledgeConfig {
        let d = KnowledgeConfig::default();
        KnowledgeConfig {
            max_query_terms: self.max_query_terms.unwrap_or(d.max_query_terms),
            snippets_per_term: self.snippets_per_term.unwrap_or(d.snippets_per_term),
            context_token_budget: self.context_token_budget.unwrap_or(d.context_token_budget),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuthConfig {
    /// Environment variable holding the bearer token.
    pub token_env: String,
    pub disabled: bool,
}

impl Default for AuthConfig {
    fn default() -> Self {
        Self {
            token_env: "HYGIEIA_API_TOKEN".into(),
            disabled: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub listen: String,
    pub store_dir: PathBuf,
    pub template_dir: Option<PathBuf>,
    pub cors_origin: Option<String>,
    pub synonyms: Option<PathBuf>,
    pub auth: AuthConfig,
    pub pipeline: PipelineConfig,
    pub backends: BTreeMap<String, BackendConfig>,
    pub roles: RolesConfig,
    pub router: RouterConfig,
    pub embedding: EmbeddingConfig,
    pub knowledge: KnowledgeSection,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".into(),
            store_dir: PathBuf::from("hygieia-store"),
            template_dir: None,
            cors_origin: None,
            synonyms: None,
            auth: AuthConfig::default(),
            pipeline: PipelineConfig::default(),
            backends: BTreeMap::new(),
            roles: RolesConfig::default(),
            router: RouterConfig::default(),
            embedding: EmbeddingConfig::default(),
            knowledge: KnowledgeSection::default(),
        }
    }
}

/// Everything a command or server needs to run pipelines.
#[derive(Clone)]
pub struct Engine {
    pub orchestrator: Orchestrator,
    pub gateway: Arc<Gateway>,
    pub embedder: Arc<dyn Embedder>,
    pub normalizer: Normalizer,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl AppConfig {
    /// Parses TOML; relative paths are resolved against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg: AppConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.resolve_paths(base_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.store_dir);
        for p in [&mut self.template_dir, &mut self.synonyms, &mut self.router.model, &mut self.knowledge.patients]
            .into_iter()
            .flatten()
        {
            resolve(base, p);
        }
        for b in self.backends.values_mut() {
            if let BackendConfig::Scripted { script } = b {
                resolve(base, script);
            }
        }
        for s in &mut self.knowledge.search {
            if let SearchConfig::Fixture { path, .. } = s {
                resolve(base, path);
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.pipeline.validate().map_err(|e| invalid(e.to_string()))?;
        if self.listen.parse::<std::net::SocketAddr>().is_err() {
            return Err(invalid(format!("listen must be host:port, got {:?}", self.listen)));
        }
        if self.router.model.is_some() && self.router.fixed.is_some() {
            return Err(invalid("router.model and router.fixed are mutually exclusive"));
        }
        if self.embedding.dim == 0 {
            return Err(invalid("embedding.dim must be positive"));
        }
        for role in AgentRole::ALL {
            if let Some(b) = self.roles.get(role) {
                if !self.backends.contains_key(&b.backend) {
                    return Err(invalid(format!("role {role} uses unknown backend {:?}", b.backend)));
                }
            }
        }
        let mut names = std::collections::HashSet::new();
        for s in &self.knowledge.search {
            let name = match s {
                SearchConfig::Fixture { name, .. } | SearchConfig::Http { name, .. } => name,
            };
            if !names.insert(name) {
                return Err(invalid(format!("duplicate search provider {name:?}")));
            }
        }
        Ok(())
    }

    /// Gateway from the backend table, or from `script` when given.
    pub fn build_gateway(&self, script: Option<Script>) -> Result<Gateway, ConfigError> {
        if let Some(script) = script {
            return Ok(Gateway::scripted(script));
        }
        if self.backends.is_empty() {
            return Err(invalid("no backends configured; add [backends.<name>] or pass a script"));
        }
        let mut builder = Gateway::builder();
        for (name, b) in &self.backends {
            builder = match b {
                BackendConfig::Http {
                    base_url,
                    timeout_secs,
                    key_env,
                    ..
                } => builder.backend(Arc::new(
                    HttpChatBackend::from_env(name, base_url, key_env.as_deref(), Duration::from_secs(*timeout_secs))
                        .map_err(|e| load_err(format!("backend {name}"), e))?,
                )),
                BackendConfig::Scripted { script } => {
                    let s = Script::load(script).map_err(|e| load_err(script.display().to_string(), e))?;
                    builder.backend(Arc::new(ScriptedBackend::new(name.clone(), s)))
                }
            };
        }
        let only = (self.backends.len() == 1).then(|| self.backends.keys().next().cloned()).flatten();
        for role in AgentRole::ALL {
            let (backend, model) = match (self.roles.get(role), &only) {
                (Some(b), _) => (b.backend.clone(), b.model.clone()),
                (None, Some(name)) => (name.clone(), None),
                (None, None) => continue,
            };
            let model = model
                .or_else(|| match &self.backends[&backend] {
                    BackendConfig::Http { model, .. } => model.clone(),
                    BackendConfig::Scripted { .. } => Some("scripted".into()),
                })
                .unwrap_or_else(|| "default".into());
            builder = builder.role(role, &backend, &model);
        }
        builder.build().map_err(|e| invalid(e.to_string()))
    }

    pub fn build_embedder(&self) -> Result<Arc<dyn Embedder>, ConfigError> {
        let e = &self.embedding;
        Ok(match &e.base_url {
            Some(url) => {
                let key = e
                    .key_env
                    .as_ref()
                    .and_then(|v| std::env::var(v).ok())
                    .filter(|k| !k.is_empty());
                Arc::new(HttpEmbedder::new(url, &e.model, e.dim, key).map_err(|err| load_err("embedder", err))?)
            }
            None => Arc::new(HashingEmbedder::new(e.dim).map_err(|err| load_err("embedder", err))?),
        })
    }

    pub fn build_router(&self, embedder: &dyn Embedder) -> Result<Router, ConfigError> {
        match (&self.router.model, &self.router.fixed) {
            (Some(path), _) => {
                let model = RouterModel::load(path).map_err(|e| load_err(path.display().to_string(), e))?;
                if model.dim() != embedder.dim() {
                    return Err(invalid(format!(
                        "router model has dimension {} but the embedder produces {}",
                        model.dim(),
                        embedder.dim()
                    )));
                }
                Ok(Router::Knn(model))
            }
            (None, Some(label)) => Ok(Router::Fixed(RouteLabel::new(label.clone()))),
            (None, None) => Ok(Router::Fixed(RouteLabel::rare())),
        }
    }

    pub fn build_templates(&self) -> Result<TemplateSet, ConfigError> {
        match &self.template_dir {
            Some(dir) => TemplateSet::from_dir(dir).map_err(|e| load_err("templates", e)),
            None => Ok(TemplateSet::default()),
        }
    }

    pub fn build_normalizer(&self) -> Result<Normalizer, ConfigError> {
        match &self.synonyms {
            Some(p) => Ok(Normalizer::new(Some(
                SynonymTable::load(p).map_err(|e| load_err(p.display().to_string(), e))?,
            ))),
            None => Ok(Normalizer::default()),
        }
    }

    /// Builds the full pipeline. `script` replaces every configured backend.
    pub async fn build_engine(&self, script: Option<Script>) -> Result<Engine, ConfigError> {
        let gateway = Arc::new(self.build_gateway(script)?);
        let embedder = self.build_embedder()?;
        let router = Arc::new(self.build_router(embedder.as_ref())?);
        let templates = Arc::new(self.build_templates()?);
        let mut knowledge = KnowledgeEngine::new(gateway.clone(), embedder.clone(), templates.clone())
            .with_config(self.knowledge.limits());
        for s in &self.knowledge.search {
            knowledge = match s {
                SearchConfig::Fixture { name, path } => knowledge.with_provider(Arc::new(
                    FixtureSearch::load(name.clone(), path).map_err(|e| load_err(path.display().to_string(), e))?,
                )),
                SearchConfig::Http { name, url, source } => knowledge.with_provider(Arc::new(
                    HttpSearch::new(name.clone(), url.clone(), *source).map_err(|e| load_err(name.clone(), e))?,
                )),
            };
        }
        if let Some(path) = &self.knowledge.patients {
            let index = PatientIndex::load(path, embedder.as_ref())
                .await
                .map_err(|e| load_err(path.display().to_string(), e))?;
            knowledge = knowledge.with_patients(Arc::new(index));
        }
        let orchestrator = Orchestrator::new(gateway.clone(), router, embedder.clone(), Arc::new(knowledge), templates);
        Ok(Engine {
            orchestrator,
            gateway,
            embedder,
            normalizer: self.build_normalizer()?,
        })
    }
}
