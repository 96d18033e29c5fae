//! LLM reasoning over a post and its evidence.
//!
//! Four orchestrators share one prompt grammar and one reply parser:
//!
//! | method | calls |
//! |--------|-------|
//! | chain of thought | 1 (+1 stricter re-ask if unparseable) |
//! | prompt ensemble | n members + 1 aggregation |
//! | self-consistency | k samples, majority vote |
//! | multi-step | one per evidence group + 1 aggregation |

mod parse;
mod prompt;
mod vote;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, ChatMessage, Completion, LlmBackend, LlmRequest, Role};
use crate::domain::{EvidenceBundle, Intermediate, Label, Post, ReasoningMethod, TokenUsage, Verdict};

pub use parse::{parse_verdict, ParsedVerdict, DEFAULT_CONFIDENCE};
pub use prompt::{
    cot_template, ensemble_templates, group_header, serialize_evidence, serialize_group, PromptTemplate,
    ENSEMBLE_AGGREGATE, MULTISTEP_AGGREGATE, OUTPUT_FORMAT, STRICT_REASK,
};
pub use vote::{majority_vote, VoteSet};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReasoningError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("unparseable reply: {raw:?}")]
    Unparseable { raw: String },
    #[error("method failed: {0}")]
    MethodFailed(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl ReasoningError {
    pub fn tag(&self) -> &'static str {
        match self {
            ReasoningError::Backend(e) => e.tag(),
            ReasoningError::Unparseable { .. } => "Unparseable",
            ReasoningError::MethodFailed(_) => "MethodFailed",
            ReasoningError::InvalidInput(_) => "InvalidInput",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningConfig {
    pub method: ReasoningMethod,
    pub model_id: String,
    /// Number of ensemble templates used (taken from the front of the list).
    pub ensemble_n: usize,
    pub sc_k: usize,
    pub sc_temperature: f64,
    /// Seed of the first call; sample `i` uses `base_seed + i`.
    pub base_seed: u64,
    pub max_tokens: u32,
}

impl ReasoningConfig {
    pub fn new(method: ReasoningMethod, model_id: impl Into<String>) -> Self {
        ReasoningConfig {
            method,
            model_id: model_id.into(),
            ensemble_n: 3,
            sc_k: 5,
            sc_temperature: 0.7,
            base_seed: 0,
            max_tokens: 512,
        }
    }
}

/// Runs the configured reasoning method against one LLM backend.
#[derive(Clone)]
pub struct Reasoner {
    llm: Arc<dyn LlmBackend>,
    config: ReasoningConfig,
    cot: PromptTemplate,
    ensemble: Vec<PromptTemplate>,
}

struct Call {
    completion: Completion,
    messages: Vec<ChatMessage>,
}

impl Reasoner {
    pub fn new(llm: Arc<dyn LlmBackend>, config: ReasoningConfig) -> Self {
        Reasoner { llm, config, cot: cot_template(), ensemble: ensemble_templates() }
    }

    pub fn with_cot_template(mut self, t: PromptTemplate) -> Self {
        self.cot = t;
        self
    }

    pub fn with_ensemble_templates(mut self, ts: Vec<PromptTemplate>) -> Self {
        self.ensemble = ts;
        self
    }

    pub fn config(&self) -> &ReasoningConfig {
        &self.config
    }

    pub fn reason(&self, post: &Post, bundle: &EvidenceBundle) -> Result<Verdict, ReasoningError> {
        match self.config.method {
            ReasoningMethod::CoT => self.cot(post, bundle),
            ReasoningMethod::Ensemble => {
                let n = self.config.ensemble_n.min(self.ensemble.len());
                self.ensemble(post, bundle, &self.ensemble[..n])
            }
            ReasoningMethod::SelfConsistency => {
                self.self_consistency(post, bundle, self.config.sc_k, self.config.sc_temperature)
            }
            ReasoningMethod::MultiStep => self.multistep(post, bundle),
        }
    }

    fn call(&self, messages: Vec<ChatMessage>, temperature: f64, seed: u64) -> Result<Call, BackendError> {
        let req = LlmRequest {
            model_id: self.config.model_id.clone(),
            messages,
            temperature,
            seed: Some(seed),
            max_tokens: self.config.max_tokens,
        };
        let completion = self.llm.complete(&req)?;
        Ok(Call { completion, messages: req.messages })
    }

    fn judge_messages(&self, t: &PromptTemplate, post: &Post, evidence: &str) -> Vec<ChatMessage> {
        let user = t.render(&post.text, evidence, &prompt::images_block(post));
        vec![
            ChatMessage::system(t.system_text.clone()),
            ChatMessage::user(user, post.images.iter().map(|i| i.sha256.clone()).collect()),
        ]
    }

    fn verdict(&self, p: ParsedVerdict, method: ReasoningMethod, usage: TokenUsage) -> Verdict {
        let mut warnings = vec![];
        if p.confidence_defaulted {
            warnings.push(format!("no confidence in reply; defaulted to {DEFAULT_CONFIDENCE}"));
        }
        Verdict {
            label: p.label,
            confidence: p.confidence,
            rationale: p.rationale,
            intermediates: None,
            reasoning_method: method,
            model_id: self.config.model_id.clone(),
            token_usage: usage,
            retries: 0,
            warnings,
        }
    }

    /// Single judging call with a single stricter re-ask when the reply
    /// cannot be parsed.
    pub fn cot(&self, post: &Post, bundle: &EvidenceBundle) -> Result<Verdict, ReasoningError> {
        self.cot_with(&self.cot, post, &serialize_evidence(bundle))
    }

    fn cot_with(&self, t: &PromptTemplate, post: &Post, evidence: &str) -> Result<Verdict, ReasoningError> {
        let seed = self.config.base_seed;
        let first = self.call(self.judge_messages(t, post, evidence), 0.0, seed)?;
        let mut usage = first.completion.usage;
        match parse_verdict(&first.completion.text) {
            Ok(p) => Ok(self.verdict(p, ReasoningMethod::CoT, usage)),
            Err(_) => {
                let mut messages = first.messages;
                messages.push(ChatMessage { role: Role::Assistant, text: first.completion.text, images: vec![] });
                messages.push(ChatMessage::user(STRICT_REASK.trim_end(), vec![]));
                let retry = self.call(messages, 0.0, seed)?;
                usage += retry.completion.usage;
                let mut v = self.verdict(parse_verdict(&retry.completion.text)?, ReasoningMethod::CoT, usage);
                v.retries = 1;
                Ok(v)
            }
        }
    }

    /// `templates.len()` member calls at temperature 0, then one aggregation
    /// call over all member replies. If aggregation fails the parsed members
    /// are put to a majority vote instead.
    pub fn ensemble(
        &self,
        post: &Post,
        bundle: &EvidenceBundle,
        templates: &[PromptTemplate],
    ) -> Result<Verdict, ReasoningError> {
        let n = templates.len();
        if n < 2 {
            return Err(ReasoningError::InvalidInput("an ensemble needs at least two templates".into()));
        }
        let mut names: Vec<_> = templates.iter().map(|t| t.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != n {
            return Err(ReasoningError::InvalidInput("ensemble templates must be distinct".into()));
        }

        let evidence = serialize_evidence(bundle);
        let mut usage = TokenUsage::default();
        let mut members: Vec<Verdict> = Vec::new();
        let mut responses = Vec::new();
        let mut failures = Vec::new();
        for (i, t) in templates.iter().enumerate() {
            match self.call(self.judge_messages(t, post, &evidence), 0.0, self.config.base_seed) {
                Ok(c) => {
                    usage += c.completion.usage;
                    responses.push(format!("Assessment {} ({}):\n{}", i + 1, t.name, c.completion.text.trim()));
                    match parse_verdict(&c.completion.text) {
                        Ok(p) => members.push(self.verdict(p, ReasoningMethod::Ensemble, c.completion.usage)),
                        Err(e) => failures.push(format!("member {}: {e}", i + 1)),
                    }
                }
                Err(e) => failures.push(format!("member {}: {e}", i + 1)),
            }
        }
        if failures.len() >= n.div_ceil(2) {
            return Err(ReasoningError::MethodFailed(format!(
                "{} of {n} ensemble members failed: {}",
                failures.len(),
                failures.join("; ")
            )));
        }

        let aggregate = ENSEMBLE_AGGREGATE
            .replace("{claim}", &post.text)
            .replace("{images}", &prompt::images_block(post))
            .replace("{responses}", &responses.join("\n\n"));
        let messages = vec![ChatMessage::user(
            format!("{}\n\n{}", aggregate.trim_end(), OUTPUT_FORMAT.trim_end()),
            post.images.iter().map(|i| i.sha256.clone()).collect(),
        )];
        let aggregated = self.call(messages, 0.0, self.config.base_seed).map_err(ReasoningError::from).and_then(|c| {
            usage += c.completion.usage;
            parse_verdict(&c.completion.text)
        });
        let mut verdict = match aggregated {
            Ok(p) => self.verdict(p, ReasoningMethod::Ensemble, usage),
            Err(e) => {
                let mut v = majority_vote(&VoteSet::new(members).expect("fewer than half failed, so some parsed"));
                v.reasoning_method = ReasoningMethod::Ensemble;
                v.token_usage = usage;
                v.warnings.push(format!("aggregation failed ({e}); used majority vote"));
                v
            }
        };
        verdict.warnings.extend(failures);
        Ok(verdict)
    }

    /// `k` sampled judging calls put to a majority vote. Failed samples are
    /// left out of the vote; more than half failing fails the method.
    pub fn self_consistency(
        &self,
        post: &Post,
        bundle: &EvidenceBundle,
        k: usize,
        temperature: f64,
    ) -> Result<Verdict, ReasoningError> {
        if k == 0 {
            return Err(ReasoningError::InvalidInput("k must be at least 1".into()));
        }
        let evidence = serialize_evidence(bundle);
        let mut votes = Vec::with_capacity(k);
        let mut usage = TokenUsage::default();
        let mut failures = Vec::new();
        for i in 0..k {
            let seed = self.config.base_seed + i as u64;
            match self.call(self.judge_messages(&self.cot, post, &evidence), temperature, seed) {
                Ok(c) => {
                    usage += c.completion.usage;
                    match parse_verdict(&c.completion.text) {
                        Ok(p) => votes.push(self.verdict(p, ReasoningMethod::SelfConsistency, c.completion.usage)),
                        Err(e) => failures.push(format!("sample {}: {e}", i + 1)),
                    }
                }
                Err(e) => failures.push(format!("sample {}: {e}", i + 1)),
            }
        }
        if 2 * failures.len() > k {
            return Err(ReasoningError::MethodFailed(format!(
                "{} of {k} samples failed: {}",
                failures.len(),
                failures.join("; ")
            )));
        }
        let mut v = majority_vote(&VoteSet::new(votes).expect("at least half the samples parsed"));
        v.token_usage = usage;
        v.warnings.extend(failures);
        Ok(v)
    }

    /// One judging call per evidence group (each sees only its group), then an
    /// aggregation call over the intermediate judgments. Failed group calls
    /// are recorded as unavailable and left out of the aggregation prompt.
    pub fn multistep(&self, post: &Post, bundle: &EvidenceBundle) -> Result<Verdict, ReasoningError> {
        if bundle.groups.is_empty() {
            return Err(ReasoningError::InvalidInput("multi-step reasoning needs at least one evidence group".into()));
        }
        let mut usage = TokenUsage::default();
        let mut intermediates = Vec::with_capacity(bundle.groups.len());
        for (sid, items) in &bundle.groups {
            let evidence = serialize_group(*sid, items);
            let outcome = self
                .call(self.judge_messages(&self.cot, post, &evidence), 0.0, self.config.base_seed)
                .map_err(ReasoningError::from)
                .and_then(|c| {
                    usage += c.completion.usage;
                    parse_verdict(&c.completion.text)
                });
            intermediates.push(match outcome {
                Ok(p) => Intermediate {
                    strategy_id: *sid,
                    label: Some(p.label),
                    confidence: Some(p.confidence),
                    rationale: p.rationale,
                },
                Err(e) => Intermediate {
                    strategy_id: *sid,
                    label: None,
                    confidence: None,
                    rationale: format!("unavailable: {e}"),
                },
            });
        }

        let lines: Vec<String> = intermediates
            .iter()
            .filter(|i| i.is_available())
            .map(|i| {
                format!(
                    "{}\nlabel: {}; confidence: {}; rationale: {}",
                    group_header(i.strategy_id),
                    i.label.map(Label::as_str).unwrap_or_default(),
                    i.confidence.unwrap_or_default(),
                    i.rationale.trim()
                )
            })
            .collect();
        let summary = if lines.is_empty() { "(no judgments available)".to_string() } else { lines.join("\n\n") };
        let aggregate = MULTISTEP_AGGREGATE
            .replace("{claim}", &post.text)
            .replace("{images}", &prompt::images_block(post))
            .replace("{intermediates}", &summary);
        let messages = vec![ChatMessage::user(
            format!("{}\n\n{}", aggregate.trim_end(), OUTPUT_FORMAT.trim_end()),
            post.images.iter().map(|i| i.sha256.clone()).collect(),
        )];
        let c = self
            .call(messages, 0.0, self.config.base_seed)
            .map_err(|e| ReasoningError::MethodFailed(format!("aggregation call failed: {e}")))?;
        usage += c.completion.usage;
        let p = parse_verdict(&c.completion.text)
            .map_err(|e| ReasoningError::MethodFailed(format!("aggregation reply: {e}")))?;
        let mut v = self.verdict(p, ReasoningMethod::MultiStep, usage);
        for i in intermediates.iter().filter(|i| !i.is_available()) {
            v.warnings.push(format!("group {} {}", i.strategy_id, i.rationale));
        }
        v.intermediates = Some(intermediates);
        Ok(v)
    }
}
