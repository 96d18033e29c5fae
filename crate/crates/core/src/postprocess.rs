//! Evidence cleaning: domain filtering and LLM-based excerpt extraction.

use std::collections::BTreeSet;
use std::path::Path;

use crate::backends::{ChatMessage, LlmBackend, LlmRequest};
use crate::domain::{recompact, registrable_domain, EvidenceBundle, Post, TokenUsage};

pub const STARTER_BLOCKLIST: &str = include_str!("../data/blocklist.txt");
pub const DEFAULT_SOURCE_EXCLUSIONS: &str = include_str!("../data/source_exclusions.txt");
pub const EXTRACTION_TEMPLATE: &str = include_str!("../prompts/extraction.v1.txt");
pub const DEFAULT_MAX_EXCERPT_CHARS: usize = 600;

/// Which evidence domains to drop.
///
/// Source exclusions always apply. The allowlist only rescues domains from
/// the blocklist.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DomainPolicy {
    pub blocklist: BTreeSet<String>,
    pub source_exclusions: BTreeSet<String>,
    pub allow_override: Option<BTreeSet<String>>,
}

/// Parses a one-domain-per-line list with `#` comments into registrable domains.
pub fn parse_domain_list(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .filter_map(registrable_domain)
        .collect()
}

impl DomainPolicy {
    pub fn new(blocklist: BTreeSet<String>, source_exclusions: BTreeSet<String>) -> Self {
        let norm = |s: BTreeSet<String>| s.iter().filter_map(|d| registrable_domain(d)).collect();
        DomainPolicy { blocklist: norm(blocklist), source_exclusions: norm(source_exclusions), allow_override: None }
    }

    /// The shipped starter blocklist plus the default source exclusions.
    pub fn starter() -> Self {
        DomainPolicy {
            blocklist: parse_domain_list(STARTER_BLOCKLIST),
            source_exclusions: parse_domain_list(DEFAULT_SOURCE_EXCLUSIONS),
            allow_override: None,
        }
    }

    pub fn from_files(
        blocklist: Option<&Path>,
        exclusions: Option<&Path>,
        allow: Option<&Path>,
    ) -> std::io::Result<Self> {
        let read = |p: &Path| std::fs::read_to_string(p).map(|t| parse_domain_list(&t));
        Ok(DomainPolicy {
            blocklist: match blocklist {
                Some(p) => read(p)?,
                None => parse_domain_list(STARTER_BLOCKLIST),
            },
            source_exclusions: match exclusions {
                Some(p) => read(p)?,
                None => parse_domain_list(DEFAULT_SOURCE_EXCLUSIONS),
            },
            allow_override: allow.map(read).transpose()?,
        })
    }

    pub fn with_allowlist(mut self, allow: BTreeSet<String>) -> Self {
        self.allow_override = Some(allow.iter().filter_map(|d| registrable_domain(d)).collect());
        self
    }

    pub fn admits(&self, domain: &str) -> bool {
        if self.source_exclusions.contains(domain) {
            return false;
        }
        if self.blocklist.contains(domain) {
            return self.allow_override.as_ref().is_some_and(|a| a.contains(domain));
        }
        true
    }
}

/// Drops items whose registrable domain the policy rejects and renumbers
/// ranks. Idempotent and order-preserving.
pub fn domain_filter(bundle: &EvidenceBundle, policy: &DomainPolicy) -> EvidenceBundle {
    let mut out = bundle.clone();
    for items in out.groups.values_mut() {
        items.retain(|it| policy.admits(&it.domain));
        recompact(items);
    }
    out
}

#[derive(Debug, Clone)]
pub struct ExtractionConfig {
    pub model_id: String,
    pub max_chars: usize,
}

impl ExtractionConfig {
    pub fn new(model_id: impl Into<String>) -> Self {
        ExtractionConfig { model_id: model_id.into(), max_chars: DEFAULT_MAX_EXCERPT_CHARS }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extraction {
    pub bundle: EvidenceBundle,
    pub token_usage: TokenUsage,
    pub calls: usize,
    pub warnings: Vec<String>,
}

fn is_irrelevant(reply: &str) -> bool {
    let r = reply.trim().trim_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace());
    r.eq_ignore_ascii_case("irrelevant")
}

fn truncate_chars(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((idx, _)) => s[..idx].to_string(),
        None => s.to_string(),
    }
}

/// Replaces each item body with the model's relevant excerpt.
///
/// One call per item with a non-empty body. Items the model marks
/// `IRRELEVANT` are dropped. Any failure (backend error, empty reply) keeps
/// the item unchanged and adds a warning.
pub fn extract_evidence(
    post: &Post,
    bundle: &EvidenceBundle,
    llm: &dyn LlmBackend,
    cfg: &ExtractionConfig,
) -> Extraction {
    let mut out = bundle.clone();
    let mut usage = TokenUsage::default();
    let mut warnings = Vec::new();
    let mut calls = 0;
    for (sid, items) in out.groups.iter_mut() {
        let mut kept = Vec::with_capacity(items.len());
        for item in items.drain(..) {
            if item.body.trim().is_empty() {
                kept.push(item);
                continue;
            }
            let prompt = EXTRACTION_TEMPLATE
                .replace("{max_len}", &cfg.max_chars.to_string())
                .replace("{claim}", &post.text)
                .replace("{title}", &item.title)
                .replace("{source}", &item.source_url)
                .replace("{body}", &item.body);
            let req = LlmRequest {
                model_id: cfg.model_id.clone(),
                messages: vec![ChatMessage::user(prompt, vec![])],
                temperature: 0.0,
                seed: Some(0),
                max_tokens: (cfg.max_chars / 2).max(64) as u32,
            };
            calls += 1;
            match llm.complete(&req) {
                Ok(c) => {
                    usage += c.usage;
                    if is_irrelevant(&c.text) {
                        continue;
                    }
                    let excerpt = c.text.trim();
                    if excerpt.is_empty() {
                        warnings.push(format!("strategy {sid} rank {}: empty excerpt, kept original", item.rank));
                        kept.push(item);
                    } else {
                        let mut item = item;
                        item.body = truncate_chars(excerpt, cfg.max_chars);
                        kept.push(item);
                    }
                }
                Err(e) => {
                    warnings.push(format!("strategy {sid} rank {}: extraction failed ({e}), kept original", item.rank));
                    kept.push(item);
                }
            }
        }
        recompact(&mut kept);
        *items = kept;
    }
    out.warnings.extend(warnings.iter().cloned());
    Extraction { bundle: out, token_usage: usage, calls, warnings }
}

/// Pulls the evidence body back out of an extraction prompt. Lets test stubs
/// act as the identity.
pub fn evidence_body_of_prompt(prompt: &str) -> Option<&str> {
    let start = prompt.find("<evidence>\n")? + "<evidence>\n".len();
    let end = prompt.rfind("\n</evidence>")?;
    prompt.get(start..end)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn list_parsing() {
        let set = parse_domain_list("# header\nA.com\n  sub.b.co.uk  # trailing\n\n");
        assert_eq!(set.into_iter().collect::<Vec<_>>(), ["a.com", "b.co.uk"]);
    }

    #[test]
    fn starter_policy_loads() {
        let p = DomainPolicy::starter();
        assert!(p.blocklist.contains("theonion.com"));
        assert!(p.source_exclusions.contains("x.com"));
        assert!(!p.admits("twitter.com"));
        assert!(p.admits("reuters.com"));
    }

    #[test]
    fn allowlist_cannot_rescue_source_exclusions() {
        let p = DomainPolicy::new(["a.com".to_string()].into(), ["x.com".to_string()].into())
            .with_allowlist(["a.com".to_string(), "x.com".to_string()].into());
        assert!(p.admits("a.com"));
        assert!(!p.admits("x.com"));
    }

    #[test]
    fn truncation_respects_char_boundaries() {
        assert_eq!(truncate_chars("héllo", 2), "hé");
        assert_eq!(truncate_chars("hi", 10), "hi");
    }

    #[test]
    fn irrelevant_marker() {
        assert!(is_irrelevant("IRRELEVANT"));
        assert!(is_irrelevant("  irrelevant.\n"));
        assert!(!is_irrelevant("The irrelevant part aside, the mayor said ..."));
    }
}
