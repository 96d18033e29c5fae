//! Clients for search engines, chat models and image embedders.
//!
//! Every backend runs in one of three modes:
//!
//! * `live`: talk to the configured endpoint;
//! * `record`: talk to the endpoint and persist every response in the cache;
//! * `replay`: answer only from the cache, failing with
//!   [`BackendError::CacheMiss`] when no recording exists.
//!
//! All network traffic passes through a [`Transport`], so tests can count
//! (and forbid) outbound calls.

mod cache;
mod embed;
mod images;
mod llm;
mod search;
mod transport;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{normalize_whitespace, CacheEntry, CacheKey, Recorder, ResponseCache};
pub use embed::{normalize, EmbeddingTable, HttpEmbedder, ImageEmbedder, RecordReplayEmbedder, ToyEmbedder};
pub use images::ImageStore;
pub use llm::{
    ChatCompletionsBackend, ChatMessage, Completion, ContextLimit, CountingLlm, FnLlm, LlmBackend, LlmRequest,
    RecordReplayLlm, Role, Scripted, ScriptedLlm,
};
pub use search::{
    Engine, EngineSlot, FnSearchEngine, HttpSearchEngine, SearchEngine, SearchHit, SearchOp, SearchQuery,
    SearchRequest, SearchResults, SearchService,
};
pub use transport::{
    CountingTransport, FnTransport, HttpRequest, HttpResponse, Method, OfflineTransport, Transport, UreqTransport,
};

/// Env var selecting the backend mode.
pub const MODE_ENV: &str = "MMFC_BACKEND_MODE";
/// Env var naming the cache root.
pub const CACHE_ENV: &str = "MMFC_CACHE_DIR";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("no recording for {backend}/{op} (key {key})")]
    CacheMiss { backend: String, op: String, key: String },
    #[error("quota exceeded")]
    QuotaExceeded,
    #[error("unreadable image {hash}: {reason}")]
    UnreadableImage { hash: String, reason: String },
    #[error("prompt needs {tokens} tokens, context holds {limit}")]
    ContextTooLong { tokens: u64, limit: u64 },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("could not decode response: {0}")]
    Decode(String),
    #[error("cache i/o: {0}")]
    Cache(String),
}

impl BackendError {
    /// Short stable tag used in prediction records.
    pub fn tag(&self) -> &'static str {
        match self {
            BackendError::BackendUnavailable(_) => "BackendUnavailable",
            BackendError::CacheMiss { .. } => "CacheMiss",
            BackendError::QuotaExceeded => "QuotaExceeded",
            BackendError::UnreadableImage { .. } => "UnreadableImage",
            BackendError::ContextTooLong { .. } => "ContextTooLong",
            BackendError::InvalidRequest(_) => "InvalidRequest",
            BackendError::Decode(_) => "Decode",
            BackendError::Cache(_) => "Cache",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendMode {
    Live,
    Record,
    Replay,
}

impl BackendMode {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendMode::Live => "live",
            BackendMode::Record => "record",
            BackendMode::Replay => "replay",
        }
    }

    /// Reads [`MODE_ENV`]; `None` when unset.
    pub fn from_env() -> Result<Option<Self>, BackendError> {
        match std::env::var(MODE_ENV) {
            Ok(v) => v.parse().map(Some),
            Err(_) => Ok(None),
        }
    }
}

impl fmt::Display for BackendMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BackendMode {
    type Err = BackendError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "live" => Ok(BackendMode::Live),
            "record" => Ok(BackendMode::Record),
            "replay" => Ok(BackendMode::Replay),
            other => Err(BackendError::InvalidRequest(format!("unknown backend mode `{other}`"))),
        }
    }
}

/// One remote endpoint. Keys come from the file or from a named env var.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub id: Option<String>,
    pub endpoint: Option<String>,
    pub api_key: Option<String>,
    pub api_key_env: Option<String>,
}

impl EndpointConfig {
    fn key(&self) -> Option<String> {
        self.api_key.clone().or_else(|| self.api_key_env.as_ref().and_then(|v| std::env::var(v).ok()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnginesConfig {
    #[serde(default)]
    pub a: EndpointConfig,
    #[serde(default)]
    pub b: EndpointConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmConfig {
    #[serde(flatten)]
    pub endpoint: EndpointConfig,
    pub max_context_tokens: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    #[serde(flatten)]
    pub endpoint: EndpointConfig,
    pub dim: Option<usize>,
}

/// The `[engines]`, `[llm]` and `[embedding]` tables of the config file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendConfig {
    #[serde(default)]
    pub engines: EnginesConfig,
    #[serde(default)]
    pub llm: LlmConfig,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
}

pub const DEFAULT_MAX_CONTEXT_TOKENS: u64 = 128_000;
pub const DEFAULT_EMBEDDING_DIM: usize = 64;

/// Every backend the pipeline needs, wired for one mode.
#[derive(Clone)]
pub struct Backends {
    pub mode: BackendMode,
    pub search: SearchService,
    pub llm: Arc<dyn LlmBackend>,
    pub embedder: Arc<dyn ImageEmbedder>,
    pub images: Arc<ImageStore>,
}

impl Backends {
    /// Builds backends from configuration. Endpoints missing from the config
    /// are simply not available live; in replay mode none are needed.
    pub fn from_config(
        cfg: &BackendConfig,
        mode: BackendMode,
        cache_root: Option<&Path>,
        transport: Arc<dyn Transport>,
    ) -> Result<Self, BackendError> {
        let cache = match cache_root {
            Some(root) => Some(Arc::new(ResponseCache::open(root).map_err(|e| BackendError::Cache(e.to_string()))?)),
            None => None,
        };
        let recorder = Recorder::new(mode, cache)?;
        let images = Arc::new(ImageStore::with_transport(transport.clone()));

        let engine = |c: &EndpointConfig, default_id: &str| -> EngineSlot {
            let live = c.endpoint.as_ref().map(|ep| {
                Arc::new(HttpSearchEngine::new(ep.clone(), c.key(), transport.clone())) as Arc<dyn SearchEngine>
            });
            EngineSlot::new(c.id.clone().unwrap_or_else(|| default_id.to_string()), live)
        };
        let search = SearchService::new(
            engine(&cfg.engines.a, "engine_a"),
            engine(&cfg.engines.b, "engine_b"),
            images.clone(),
            recorder.clone(),
        );

        let live_llm = cfg.llm.endpoint.endpoint.as_ref().map(|ep| {
            Arc::new(ChatCompletionsBackend::new(ep.clone(), cfg.llm.endpoint.key(), transport.clone(), images.clone()))
                as Arc<dyn LlmBackend>
        });
        let llm_id = cfg.llm.endpoint.id.clone().unwrap_or_else(|| "llm".into());
        let llm: Arc<dyn LlmBackend> = Arc::new(ContextLimit::new(
            Arc::new(RecordReplayLlm::new(llm_id, live_llm, recorder.clone())),
            cfg.llm.max_context_tokens.unwrap_or(DEFAULT_MAX_CONTEXT_TOKENS),
        ));

        let dim = cfg.embedding.dim.unwrap_or(DEFAULT_EMBEDDING_DIM);
        let embedder: Arc<dyn ImageEmbedder> = match &cfg.embedding.endpoint.endpoint {
            Some(ep) => {
                let live: Arc<dyn ImageEmbedder> = Arc::new(HttpEmbedder::new(
                    ep.clone(),
                    cfg.embedding.endpoint.key(),
                    dim,
                    transport.clone(),
                    images.clone(),
                ));
                let id = cfg.embedding.endpoint.id.clone().unwrap_or_else(|| "embedder".into());
                Arc::new(RecordReplayEmbedder::new(id, dim, Some(live), recorder))
            }
            None => Arc::new(ToyEmbedder::new(dim)),
        };

        Ok(Backends { mode, search, llm, embedder, images })
    }

    pub fn with_llm(mut self, llm: Arc<dyn LlmBackend>) -> Self {
        self.llm = llm;
        self
    }
}

/// Cache root from an explicit value or [`CACHE_ENV`].
pub fn cache_root_from_env(explicit: Option<PathBuf>) -> Option<PathBuf> {
    explicit.or_else(|| std::env::var_os(CACHE_ENV).map(PathBuf::from))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parses() {
        let cfg: BackendConfig = toml::from_str(
            r#"
            [engines.a]
            id = "google"
            endpoint = "https://gw.example/google"
            api_key_env = "NOPE_NOT_SET"
            [llm]
            endpoint = "https://api.example/v1"
            max_context_tokens = 8000
            [embedding]
            dim = 32
            "#,
        )
        .unwrap();
        assert_eq!(cfg.engines.a.id.as_deref(), Some("google"));
        assert_eq!(cfg.engines.a.key(), None);
        assert_eq!(cfg.llm.max_context_tokens, Some(8000));
        let b = Backends::from_config(&cfg, BackendMode::Live, None, Arc::new(OfflineTransport)).unwrap();
        assert_eq!(b.embedder.dim(), 32);
    }

    #[test]
    fn replay_without_cache_is_rejected() {
        let r = Backends::from_config(&BackendConfig::default(), BackendMode::Replay, None, Arc::new(OfflineTransport));
        assert!(r.is_err());
    }

    #[test]
    fn mode_parse() {
        assert_eq!("Replay".parse::<BackendMode>().unwrap(), BackendMode::Replay);
        assert!("offline".parse::<BackendMode>().is_err());
    }
}
