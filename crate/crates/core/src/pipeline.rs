//! One post through retrieve → filter → extract → reason.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backends::{BackendError, Backends, ImageStore, LlmBackend};
use crate::domain::{EvidenceBundle, Post, ReasoningMethod, StrategyId, TokenUsage, Verdict};
use crate::postprocess::{domain_filter, extract_evidence, DomainPolicy, ExtractionConfig};
use crate::reasoning::{Reasoner, ReasoningConfig, ReasoningError};
use crate::retrieval::{RetrievalError, RetrievalPlan, Retriever, DEFAULT_K, DEFAULT_N_QUERIES};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PipelineError {
    #[error("retrieval: {0}")]
    Retrieval(#[from] RetrievalError),
    #[error("reasoning: {0}")]
    Reasoning(#[from] ReasoningError),
    #[error("invalid pipeline config: {0}")]
    Config(String),
}

impl PipelineError {
    /// Stable short name of the underlying failure, e.g. `CacheMiss`.
    pub fn tag(&self) -> &'static str {
        match self {
            PipelineError::Retrieval(e) => e.root_cause().map(BackendError::tag).unwrap_or("RetrievalFailed"),
            PipelineError::Reasoning(e) => e.tag(),
            PipelineError::Config(_) => "InvalidConfig",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Empty means no retrieval at all; reasoning then sees an empty bundle.
    pub strategies: Vec<StrategyId>,
    pub k: usize,
    pub n_queries: usize,
    pub domain_filter: bool,
    pub extraction: bool,
    pub reasoning: ReasoningConfig,
}

impl PipelineConfig {
    pub fn new(reasoning: ReasoningConfig) -> Self {
        PipelineConfig {
            strategies: vec![StrategyId::TEXT_TO_TEXT, StrategyId::IMAGE_TO_TEXT],
            k: DEFAULT_K,
            n_queries: DEFAULT_N_QUERIES,
            domain_filter: true,
            extraction: false,
            reasoning,
        }
    }

    pub fn with_strategies(mut self, s: impl IntoIterator<Item = StrategyId>) -> Self {
        self.strategies = s.into_iter().collect();
        self
    }

    fn plan(&self) -> Result<Option<RetrievalPlan>, PipelineError> {
        if self.strategies.is_empty() {
            return Ok(None);
        }
        Ok(Some(RetrievalPlan::new(self.strategies.iter().copied(), self.k, self.n_queries)?))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.plan()?;
        if self.strategies.is_empty() && self.reasoning.method == ReasoningMethod::MultiStep {
            return Err(PipelineError::Config("multi-step reasoning needs at least one strategy".into()));
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> ConfigFingerprint {
        let mut strategies: Vec<u8> = self.strategies.iter().map(|s| s.get()).collect();
        strategies.sort_unstable();
        strategies.dedup();
        let mut fp = ConfigFingerprint {
            strategies,
            k: self.k,
            n_queries: self.n_queries,
            reasoning_method: self.reasoning.method,
            model_id: self.reasoning.model_id.clone(),
            domain_filter: self.domain_filter,
            extraction: self.extraction,
            digest: String::new(),
        };
        let canonical = serde_json::to_string(&(&fp, &self.reasoning)).expect("serializable");
        fp.digest = hex::encode(&Sha256::digest(canonical.as_bytes())[..8]);
        fp
    }
}

/// What a report was produced with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigFingerprint {
    pub strategies: Vec<u8>,
    pub k: usize,
    pub n_queries: usize,
    pub reasoning_method: ReasoningMethod,
    pub model_id: String,
    pub domain_filter: bool,
    pub extraction: bool,
    /// Short digest of the full configuration, including sampling settings.
    pub digest: String,
}

/// Evidence and verdict for one post.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Detection {
    pub bundle: EvidenceBundle,
    pub verdict: Verdict,
    /// Tokens spent on evidence extraction (reasoning tokens are in the verdict).
    pub extraction_usage: TokenUsage,
}

#[derive(Clone)]
pub struct Pipeline {
    config: PipelineConfig,
    plan: Option<RetrievalPlan>,
    retriever: Retriever,
    policy: DomainPolicy,
    llm: Arc<dyn LlmBackend>,
    reasoner: Reasoner,
    images: Arc<ImageStore>,
    image_dir: Option<PathBuf>,
}

impl Pipeline {
    pub fn new(backends: &Backends, config: PipelineConfig, policy: DomainPolicy) -> Result<Self, PipelineError> {
        config.validate()?;
        let model = config.reasoning.model_id.clone();
        Ok(Pipeline {
            plan: config.plan()?,
            retriever: Retriever::new(backends.search.clone(), backends.llm.clone(), model),
            policy,
            llm: backends.llm.clone(),
            reasoner: Reasoner::new(backends.llm.clone(), config.reasoning.clone()),
            images: backends.images.clone(),
            image_dir: None,
            config,
        })
    }

    pub fn with_retriever(mut self, r: Retriever) -> Self {
        self.retriever = r;
        self
    }

    pub fn with_reasoner(mut self, r: Reasoner) -> Self {
        self.reasoner = r;
        self
    }

    /// Directory relative image locations resolve against (live and record modes).
    pub fn with_image_dir(mut self, dir: Option<&Path>) -> Self {
        self.image_dir = dir.map(Path::to_path_buf);
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn detect(&self, post: &Post) -> Result<Detection, PipelineError> {
        self.images.register_post(post, self.image_dir.as_deref());
        let mut bundle = match &self.plan {
            Some(plan) => self.retriever.retrieve(post, plan)?,
            None => EvidenceBundle::empty(post.id.clone()),
        };
        if self.config.domain_filter {
            bundle = domain_filter(&bundle, &self.policy);
        }
        let mut extraction_usage = TokenUsage::default();
        if self.config.extraction {
            let ex = extract_evidence(
                post,
                &bundle,
                self.llm.as_ref(),
                &ExtractionConfig::new(self.config.reasoning.model_id.clone()),
            );
            extraction_usage = ex.token_usage;
            bundle = ex.bundle;
            bundle.warnings.extend(ex.warnings);
        }
        let verdict = self.reasoner.reason(post, &bundle)?;
        Ok(Detection { bundle, verdict, extraction_usage })
    }
}
