//! Evidence retrieval strategies and bundle assembly.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::{mpsc, Arc};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{
    normalize_whitespace, BackendError, ChatMessage, Engine, LlmBackend, LlmRequest, SearchOp, SearchRequest,
    SearchResults, SearchService,
};
use crate::domain::{EvidenceBundle, EvidenceItem, Post, Provenance, StrategyId};

pub const QUERY_TEMPLATE: &str = include_str!("../prompts/query_generation.v1.txt");
pub const QUERY_TEMPLATE_VERSION: &str = "query_generation.v1";

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_N_QUERIES: usize = 3;
pub const DEFAULT_LIVE_DEADLINE: Duration = Duration::from_secs(30);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RetrievalError {
    #[error("strategy {sid} failed: {}", join_causes(causes))]
    StrategyFailed { sid: StrategyId, causes: Vec<BackendError> },
    #[error("all strategies failed")]
    AllStrategiesFailed { failures: Vec<(StrategyId, Vec<BackendError>)> },
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
}

impl RetrievalError {
    /// The first underlying backend error, if any.
    pub fn root_cause(&self) -> Option<&BackendError> {
        match self {
            RetrievalError::StrategyFailed { causes, .. } => causes.first(),
            RetrievalError::AllStrategiesFailed { failures } => failures.iter().flat_map(|(_, c)| c).next(),
            RetrievalError::InvalidPlan(_) => None,
        }
    }
}

fn join_causes(causes: &[BackendError]) -> String {
    causes.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalPlan {
    strategies: Vec<StrategyId>,
    k: usize,
    n_queries: usize,
}

impl RetrievalPlan {
    /// Strategies are deduplicated and kept in ascending order.
    pub fn new(
        strategies: impl IntoIterator<Item = StrategyId>,
        k: usize,
        n_queries: usize,
    ) -> Result<Self, RetrievalError> {
        let set: BTreeSet<_> = strategies.into_iter().collect();
        if set.is_empty() {
            return Err(RetrievalError::InvalidPlan("no strategies".into()));
        }
        if k == 0 || n_queries == 0 {
            return Err(RetrievalError::InvalidPlan("k and n_queries must be at least 1".into()));
        }
        Ok(RetrievalPlan { strategies: set.into_iter().collect(), k, n_queries })
    }

    pub fn strategies(&self) -> &[StrategyId] {
        &self.strategies
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_queries(&self) -> usize {
        self.n_queries
    }
}

impl Default for RetrievalPlan {
    /// Text→text plus image→text, the pair that complement each other best.
    fn default() -> Self {
        RetrievalPlan::new([StrategyId::TEXT_TO_TEXT, StrategyId::IMAGE_TO_TEXT], DEFAULT_K, DEFAULT_N_QUERIES)
            .expect("default plan is valid")
    }
}

/// Items from one strategy plus whatever went wrong along the way.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StrategyOutput {
    pub items: Vec<EvidenceItem>,
    pub warnings: Vec<String>,
    pub backends: Vec<String>,
    pub retrieved_at: String,
}

/// Lists images of a post for prompts: `Image 1: <hash>`.
pub fn describe_images(post: &Post) -> String {
    post.images
        .iter()
        .enumerate()
        .map(|(i, img)| format!("Image {}: sha256 {} (attached)", i + 1, img.sha256))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Clone)]
pub struct Retriever {
    search: SearchService,
    llm: Arc<dyn LlmBackend>,
    model_id: String,
    deadline: Option<Duration>,
}

impl Retriever {
    pub fn new(search: SearchService, llm: Arc<dyn LlmBackend>, model_id: impl Into<String>) -> Self {
        Retriever { search, llm, model_id: model_id.into(), deadline: None }
    }

    /// Per-post deadline across all strategies. `None` waits indefinitely.
    pub fn with_deadline(mut self, deadline: Option<Duration>) -> Self {
        self.deadline = deadline;
        self
    }

    /// Asks the model for `n` search queries about the suspicious details of
    /// the post. Short answers are padded with the post text; the result is
    /// deduplicated, so it may hold fewer than `n` queries but never zero.
    pub fn generate_queries(&self, post: &Post, n: usize) -> Result<Vec<String>, BackendError> {
        let n = n.max(1);
        let prompt = QUERY_TEMPLATE
            .replace("{claim}", &post.text)
            .replace("{images}", &describe_images(post))
            .replace("{n}", &n.to_string());
        let req = LlmRequest {
            model_id: self.model_id.clone(),
            messages: vec![ChatMessage::user(prompt, post.images.iter().map(|i| i.sha256.clone()).collect())],
            temperature: 0.0,
            seed: Some(0),
            max_tokens: 256,
        };
        let reply = self.llm.complete(&req)?;
        Ok(queries_from_reply(&reply.text, &post.text, n))
    }

    pub fn run_strategy(
        &self,
        post: &Post,
        sid: StrategyId,
        k: usize,
        n_queries: usize,
    ) -> Result<StrategyOutput, RetrievalError> {
        let queries = match sid {
            StrategyId::QUERY_TO_IMAGE | StrategyId::QUERY_TO_TEXT => Some(
                self.generate_queries(post, n_queries)
                    .map_err(|e| RetrievalError::StrategyFailed { sid, causes: vec![e] })?,
            ),
            _ => None,
        };
        self.run_with_queries(post, sid, k, queries.as_deref())
    }

    fn run_with_queries(
        &self,
        post: &Post,
        sid: StrategyId,
        k: usize,
        queries: Option<&[String]>,
    ) -> Result<StrategyOutput, RetrievalError> {
        let text = |engine, op| SearchRequest::text(engine, op, post.text.clone(), k);
        let requests: Vec<SearchRequest> = match sid.get() {
            1 => vec![text(Engine::A, SearchOp::TextSearch)],
            2 => vec![text(Engine::A, SearchOp::ImageSearch)],
            3 => post.images.iter().map(|img| SearchRequest::reverse_image(Engine::A, img.sha256.clone(), k)).collect(),
            4 | 5 => {
                let op = if sid == StrategyId::QUERY_TO_IMAGE { SearchOp::ImageSearch } else { SearchOp::TextSearch };
                queries.unwrap_or_default().iter().map(|q| SearchRequest::text(Engine::A, op, q.clone(), k)).collect()
            }
            6 => vec![text(Engine::B, SearchOp::TextSearch)],
            7 => vec![text(Engine::B, SearchOp::ImageSearch)],
            _ => vec![text(Engine::B, SearchOp::NewsSearch)],
        };

        let mut items = Vec::new();
        let mut warnings = Vec::new();
        let mut causes = Vec::new();
        let mut backends = Vec::new();
        let mut retrieved_at = String::new();
        let mut seen = HashSet::new();
        let union = matches!(sid.get(), 4 | 5);
        for req in &requests {
            match self.search.search(req) {
                Ok(SearchResults { items: found, backend, retrieved_at: at, warnings: w }) => {
                    warnings.extend(w);
                    if !backends.contains(&backend) {
                        backends.push(backend);
                    }
                    retrieved_at = retrieved_at.max(at);
                    for item in found {
                        if union {
                            let key = item
                                .image_ref
                                .as_ref()
                                .map(|i| i.sha256.to_string())
                                .unwrap_or_else(|| item.source_url.clone());
                            if !seen.insert(key) {
                                continue;
                            }
                        }
                        items.push(item);
                    }
                }
                Err(e) => {
                    warnings.push(format!("strategy {sid}: {e}"));
                    causes.push(e);
                }
            }
        }
        if !requests.is_empty() && causes.len() == requests.len() {
            return Err(RetrievalError::StrategyFailed { sid, causes });
        }
        for (i, item) in items.iter_mut().enumerate() {
            item.strategy_id = sid;
            item.rank = i as u32 + 1;
        }
        Ok(StrategyOutput { items, warnings, backends, retrieved_at })
    }

    /// Runs every strategy of the plan and groups the results.
    ///
    /// Strategies run concurrently; a failing strategy leaves an empty group
    /// and a warning. Only when every strategy fails is the call an error.
    pub fn retrieve(&self, post: &Post, plan: &RetrievalPlan) -> Result<EvidenceBundle, RetrievalError> {
        let needs_queries =
            plan.strategies().iter().any(|s| matches!(*s, StrategyId::QUERY_TO_IMAGE | StrategyId::QUERY_TO_TEXT));
        let queries = if needs_queries { Some(self.generate_queries(post, plan.n_queries())) } else { None };

        let (tx, rx) = mpsc::channel();
        for &sid in plan.strategies() {
            let tx = tx.clone();
            let this = self.clone();
            let post = post.clone();
            let k = plan.k();
            let queries = queries.clone();
            std::thread::spawn(move || {
                let out = match (sid.get(), queries) {
                    (4 | 5, Some(Err(e))) => Err(RetrievalError::StrategyFailed { sid, causes: vec![e] }),
                    (_, q) => {
                        let q = q.and_then(Result::ok);
                        this.run_with_queries(&post, sid, k, q.as_deref())
                    }
                };
                let _ = tx.send((sid, out));
            });
        }
        drop(tx);

        let started = Instant::now();
        let mut results = BTreeMap::new();
        while results.len() < plan.strategies().len() {
            let received = match self.deadline {
                Some(d) => match rx.recv_timeout(d.saturating_sub(started.elapsed())) {
                    Ok(r) => r,
                    Err(_) => break,
                },
                None => match rx.recv() {
                    Ok(r) => r,
                    Err(_) => break,
                },
            };
            results.insert(received.0, received.1);
        }

        let mut bundle = EvidenceBundle::empty(post.id.clone());
        let mut failures = Vec::new();
        for &sid in plan.strategies() {
            match results.remove(&sid) {
                Some(Ok(out)) => {
                    bundle.warnings.extend(out.warnings);
                    bundle.provenance.push(Provenance {
                        strategy_id: sid,
                        backends: out.backends,
                        retrieved_at: out.retrieved_at,
                    });
                    bundle.groups.insert(sid, out.items);
                }
                Some(Err(e)) => {
                    bundle.warnings.push(e.to_string());
                    let causes = match e {
                        RetrievalError::StrategyFailed { causes, .. } => causes,
                        _ => vec![],
                    };
                    failures.push((sid, causes));
                    bundle.groups.insert(sid, Vec::new());
                }
                None => {
                    let cause = BackendError::BackendUnavailable("retrieval deadline exceeded".into());
                    bundle.warnings.push(format!("strategy {sid}: {cause}"));
                    failures.push((sid, vec![cause]));
                    bundle.groups.insert(sid, Vec::new());
                }
            }
        }
        if failures.len() == plan.strategies().len() {
            return Err(RetrievalError::AllStrategiesFailed { failures });
        }
        Ok(bundle)
    }
}

/// Cleans model output into at most `n` distinct queries, padding with the
/// post text.
pub fn queries_from_reply(reply: &str, post_text: &str, n: usize) -> Vec<String> {
    let mut lines: Vec<String> = reply
        .lines()
        .map(|l| {
            let l = l.trim();
            let l = l.trim_start_matches(|c: char| c.is_ascii_digit() || matches!(c, '.' | ')' | '-' | '*' | '•'));
            normalize_whitespace(l.trim().trim_matches('"'))
        })
        .filter(|l| !l.is_empty())
        .take(n)
        .collect();
    while lines.len() < n {
        lines.push(normalize_whitespace(post_text));
    }
    let mut seen = HashSet::new();
    lines.retain(|q| seen.insert(q.to_lowercase()));
    lines
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn padding_then_dedup() {
        assert_eq!(queries_from_reply("a\nb\nc", "T", 3), ["a", "b", "c"]);
        assert_eq!(queries_from_reply("only line", "T", 3), ["only line", "T"]);
        assert_eq!(queries_from_reply("", "T", 3), ["T"]);
        assert_eq!(queries_from_reply("1. first\n2) second\n- third\nfourth", "T", 3), ["first", "second", "third"]);
        assert_eq!(queries_from_reply("\"Same\"\nsame", "T", 2), ["Same"]);
    }

    #[test]
    fn plan_validation() {
        assert!(RetrievalPlan::new([], 5, 3).is_err());
        assert!(RetrievalPlan::new([StrategyId::TEXT_TO_TEXT], 0, 3).is_err());
        let p =
            RetrievalPlan::new([StrategyId::IMAGE_TO_TEXT, StrategyId::TEXT_TO_TEXT, StrategyId::IMAGE_TO_TEXT], 5, 3)
                .unwrap();
        assert_eq!(p.strategies(), [StrategyId::TEXT_TO_TEXT, StrategyId::IMAGE_TO_TEXT]);
        assert_eq!(RetrievalPlan::default().strategies(), p.strategies());
    }
}
