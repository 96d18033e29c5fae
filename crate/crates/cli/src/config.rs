//! Effective configuration: flags over env vars over the config file.
//!
//! Flags and env vars are merged by clap; this module fills whatever is
//! still unset from the TOML file and validates the result.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::builder::BoolishValueParser;
use clap::Args;
use mmfc_core::backends::{
    BackendConfig, BackendMode, Backends, CountingTransport, EmbeddingConfig, EnginesConfig, LlmConfig, Transport,
    UreqTransport,
};
use mmfc_core::domain::{ReasoningMethod, StrategyId};
use mmfc_core::pipeline::{Pipeline, PipelineConfig};
use mmfc_core::postprocess::DomainPolicy;
use mmfc_core::reasoning::ReasoningConfig;
use serde::Deserialize;

use crate::CliError;

pub const HTTP_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StrategyList(pub Vec<StrategyId>);

fn parse_strategies(s: &str) -> Result<StrategyList, String> {
    if matches!(s.trim(), "" | "none") {
        return Ok(StrategyList(vec![]));
    }
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<u8>()
                .map_err(|e| format!("`{p}`: {e}"))
                .and_then(|n| StrategyId::new(n).map_err(|e| e.to_string()))
        })
        .collect::<Result<_, _>>()
        .map(StrategyList)
}

fn parse_method(s: &str) -> Result<ReasoningMethod, String> {
    s.parse().map_err(|e: mmfc_core::domain::ValidationError| e.to_string())
}

fn parse_mode(s: &str) -> Result<BackendMode, String> {
    s.parse().map_err(|e: mmfc_core::backends::BackendError| e.to_string())
}

/// Options shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML config file ([run], [serve], [engines], [llm], [embedding]).
    #[arg(long, global = true, env = "MMFC_CONFIG")]
    pub config: Option<PathBuf>,
    /// live, record or replay.
    #[arg(long, global = true, env = "MMFC_BACKEND_MODE", value_parser = parse_mode)]
    pub backend_mode: Option<BackendMode>,
    /// Record/replay cache root.
    #[arg(long, global = true, env = "MMFC_CACHE_DIR")]
    pub cache_dir: Option<PathBuf>,
    /// Worker threads for per-post parallelism.
    #[arg(long, global = true, env = "MMFC_JOBS")]
    pub jobs: Option<usize>,
}

/// Pipeline options.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Retrieval strategies, comma separated ids 1-8, or `none`.
    #[arg(long, env = "MMFC_STRATEGIES", value_parser = parse_strategies)]
    pub strategies: Option<StrategyList>,
    /// Results kept per strategy.
    #[arg(long, env = "MMFC_K")]
    pub k: Option<usize>,
    /// Model-generated queries for strategies 4 and 5.
    #[arg(long, env = "MMFC_N_QUERIES")]
    pub n_queries: Option<usize>,
    /// Drop evidence from blocked and dataset-source domains (on/off).
    #[arg(long, env = "MMFC_DOMAIN_FILTER", value_parser = BoolishValueParser::new())]
    pub domain_filter: Option<bool>,
    /// Trim evidence to the claim-relevant part with the LLM (on/off).
    #[arg(long, env = "MMFC_EXTRACTION", value_parser = BoolishValueParser::new())]
    pub extraction: Option<bool>,
    /// cot, ensemble, sc or multistep.
    #[arg(long, env = "MMFC_METHOD", value_parser = parse_method)]
    pub method: Option<ReasoningMethod>,
    /// Model id sent to the LLM backend.
    #[arg(long, env = "MMFC_MODEL")]
    pub model: Option<String>,
    /// Samples for self-consistency.
    #[arg(long)]
    pub sc_k: Option<usize>,
    /// Sampling temperature for self-consistency.
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Prompt templates used by the ensemble.
    #[arg(long)]
    pub ensemble_n: Option<usize>,
    /// Seed of the first self-consistency sample.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Domain blocklist file (defaults to the bundled starter list).
    #[arg(long)]
    pub blocklist: Option<PathBuf>,
    /// Dataset-source domains to exclude (defaults to the bundled list).
    #[arg(long)]
    pub source_exclusions: Option<PathBuf>,
    /// Domains rescued from the blocklist.
    #[arg(long)]
    pub allowlist: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub strategies: Option<Vec<u8>>,
    pub k: Option<usize>,
    pub n_queries: Option<usize>,
    pub domain_filter: Option<bool>,
    pub extraction: Option<bool>,
    pub method: Option<String>,
    pub model: Option<String>,
    pub sc_k: Option<usize>,
    pub temperature: Option<f64>,
    pub ensemble_n: Option<usize>,
    pub seed: Option<u64>,
    pub backend_mode: Option<String>,
    pub cache_dir: Option<PathBuf>,
    pub blocklist: Option<PathBuf>,
    pub source_exclusions: Option<PathBuf>,
    pub allowlist: Option<PathBuf>,
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServeSection {
    pub journal: Option<PathBuf>,
    pub bind: Option<String>,
    pub tokens: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub serve: ServeSection,
    #[serde(default)]
    pub engines: EnginesConfig,
    #[serde(default)]
    pub llm: LlmConfig,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
}

/// The parsed config file and the directory its relative paths resolve from.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    pub file: FileConfig,
    pub dir: PathBuf,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Settings { file: FileConfig::default(), dir: PathBuf::from(".") }) };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let file = toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Settings { file, dir })
    }

    pub fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.dir.join(p)
        }
    }

    pub fn mode(&self, g: &GlobalArgs) -> Result<BackendMode, CliError> {
        match (g.backend_mode, &self.file.run.backend_mode) {
            (Some(m), _) => Ok(m),
            (None, Some(s)) => s.parse().map_err(|e| CliError::Usage(format!("[run].backend_mode: {e}"))),
            (None, None) => Ok(BackendMode::Live),
        }
    }

    pub fn cache_dir(&self, g: &GlobalArgs) -> Option<PathBuf> {
        g.cache_dir.clone().or_else(|| self.file.run.cache_dir.as_deref().map(|p| self.path(p)))
    }

    pub fn jobs(&self, g: &GlobalArgs) -> Option<usize> {
        g.jobs.or(self.file.run.jobs)
    }

    pub fn backend_config(&self) -> BackendConfig {
        BackendConfig {
            engines: self.file.engines.clone(),
            llm: self.file.llm.clone(),
            embedding: self.file.embedding.clone(),
        }
    }

    /// Backends for `mode`. Replay never gets a network transport.
    pub fn connect(
        &self,
        mode: BackendMode,
        cache: Option<&Path>,
    ) -> Result<(Backends, Arc<CountingTransport>), CliError> {
        if mode != BackendMode::Live && cache.is_none() {
            return Err(CliError::Usage(format!(
                "{mode} mode needs a cache root (--cache-dir, MMFC_CACHE_DIR or [run].cache_dir)"
            )));
        }
        let transport = Arc::new(match mode {
            BackendMode::Replay => CountingTransport::offline(),
            _ => CountingTransport::new(Arc::new(UreqTransport::new(HTTP_TIMEOUT)) as Arc<dyn Transport>),
        });
        let b = Backends::from_config(&self.backend_config(), mode, cache, transport.clone())
            .map_err(|e| CliError::Fatal(e.to_string()))?;
        Ok((b, transport))
    }
}

/// Everything needed to build a pipeline.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub mode: BackendMode,
    pub cache_dir: Option<PathBuf>,
    pub policy: DomainPolicy,
}

impl RunConfig {
    pub fn model(run: &RunArgs, s: &Settings) -> Option<String> {
        run.model.clone().or_else(|| s.file.run.model.clone())
    }

    pub fn resolve(g: &GlobalArgs, run: &RunArgs, s: &Settings) -> Result<Self, CliError> {
        let f = &s.file.run;
        let usage = |m: String| CliError::Usage(m);
        let model =
            Self::model(run, s).ok_or_else(|| usage("no model id (--model, MMFC_MODEL or [run].model)".into()))?;
        let method = match (run.method, &f.method) {
            (Some(m), _) => m,
            (None, Some(m)) => parse_method(m).map_err(|e| usage(format!("[run].method: {e}")))?,
            (None, None) => ReasoningMethod::MultiStep,
        };
        let mut reasoning = ReasoningConfig::new(method, model);
        if let Some(v) = run.sc_k.or(f.sc_k) {
            reasoning.sc_k = v;
        }
        if let Some(v) = run.temperature.or(f.temperature) {
            reasoning.sc_temperature = v;
        }
        if let Some(v) = run.ensemble_n.or(f.ensemble_n) {
            reasoning.ensemble_n = v;
        }
        if let Some(v) = run.seed.or(f.seed) {
            reasoning.base_seed = v;
        }

        let mut pipeline = PipelineConfig::new(reasoning);
        match (&run.strategies, &f.strategies) {
            (Some(list), _) => pipeline.strategies = list.0.clone(),
            (None, Some(ids)) => {
                pipeline.strategies = ids
                    .iter()
                    .map(|&n| StrategyId::new(n))
                    .collect::<Result<_, _>>()
                    .map_err(|e| usage(format!("[run].strategies: {e}")))?
            }
            (None, None) => {}
        }
        if let Some(v) = run.k.or(f.k) {
            pipeline.k = v;
        }
        if let Some(v) = run.n_queries.or(f.n_queries) {
            pipeline.n_queries = v;
        }
        if let Some(v) = run.domain_filter.or(f.domain_filter) {
            pipeline.domain_filter = v;
        }
        if let Some(v) = run.extraction.or(f.extraction) {
            pipeline.extraction = v;
        }
        pipeline.validate().map_err(|e| usage(e.to_string()))?;

        let mode = s.mode(g)?;
        let cache_dir = s.cache_dir(g);
        if mode != BackendMode::Live && cache_dir.is_none() {
            return Err(usage(format!(
                "{mode} mode needs a cache root (--cache-dir, MMFC_CACHE_DIR or [run].cache_dir)"
            )));
        }
        if pipeline.extraction && mode != BackendMode::Replay && s.file.llm.endpoint.endpoint.is_none() {
            return Err(usage("evidence extraction needs an LLM endpoint ([llm].endpoint)".into()));
        }

        let file_path = |flag: &Option<PathBuf>, file: &Option<PathBuf>| {
            flag.clone().or_else(|| file.as_deref().map(|p| s.path(p)))
        };
        let policy = DomainPolicy::from_files(
            file_path(&run.blocklist, &f.blocklist).as_deref(),
            file_path(&run.source_exclusions, &f.source_exclusions).as_deref(),
            file_path(&run.allowlist, &f.allowlist).as_deref(),
        )
        .map_err(|e| usage(format!("domain list: {e}")))?;
        Ok(RunConfig { pipeline, mode, cache_dir, policy })
    }

    pub fn build(
        &self,
        s: &Settings,
        image_dir: Option<&Path>,
    ) -> Result<(Pipeline, Backends, Arc<CountingTransport>), CliError> {
        let (backends, transport) = s.connect(self.mode, self.cache_dir.as_deref())?;
        let pipeline = Pipeline::new(&backends, self.pipeline.clone(), self.policy.clone())
            .map_err(|e| CliError::Usage(e.to_string()))?
            .with_image_dir(image_dir);
        Ok((pipeline, backends, transport))
    }
}
