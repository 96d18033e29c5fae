mod common;

use std::collections::BTreeSet;

use common::{item, post};
use mmfc_core::backends::{BackendError, FnLlm};
use mmfc_core::domain::{EvidenceBundle, StrategyId};
use mmfc_core::postprocess::{
    domain_filter, evidence_body_of_prompt, extract_evidence, DomainPolicy, ExtractionConfig,
};

fn bundle() -> EvidenceBundle {
    let mut b = EvidenceBundle::empty("p");
    b.groups.insert(
        StrategyId::TEXT_TO_TEXT,
        vec![
            item(1, 1, "https://www.theonion.com/a", "satire"),
            item(1, 2, "https://reuters.com/b", "clean one"),
            item(1, 3, "https://x.com/u/status/1", "source platform"),
            item(1, 4, "https://news.infowars.com/c", "sub-blocked"),
            item(1, 5, "https://apnews.com/d", "clean two"),
        ],
    );
    b.groups.insert(StrategyId::IMAGE_TO_TEXT, vec![item(3, 1, "https://mobile.twitter.com/z", "excluded")]);
    b
}

#[test]
fn only_clean_domains_survive_and_ranks_recompact() {
    let out = domain_filter(&bundle(), &DomainPolicy::starter());
    let t = &out.groups[&StrategyId::TEXT_TO_TEXT];
    let domains: Vec<_> = t.iter().map(|i| i.domain.as_str()).collect();
    assert_eq!(domains, ["reuters.com", "apnews.com"]);
    assert_eq!(t.iter().map(|i| i.rank).collect::<Vec<_>>(), [1, 2]);
    assert!(out.groups[&StrategyId::IMAGE_TO_TEXT].is_empty());
}

#[test]
fn filter_is_idempotent() {
    let policy = DomainPolicy::starter();
    let once = domain_filter(&bundle(), &policy);
    assert_eq!(domain_filter(&once, &policy), once);
}

#[test]
fn allowlist_rescues_blocked_but_not_excluded() {
    let allow = BTreeSet::from(["theonion.com".to_string(), "x.com".to_string()]);
    let out = domain_filter(&bundle(), &DomainPolicy::starter().with_allowlist(allow));
    let domains: Vec<_> = out.groups[&StrategyId::TEXT_TO_TEXT].iter().map(|i| i.domain.clone()).collect();
    assert_eq!(domains, ["theonion.com", "reuters.com", "apnews.com"]);
}

#[test]
fn extraction_trims_drops_and_fails_open() {
    let llm = FnLlm(|req: &mmfc_core::backends::LlmRequest| {
        let body = evidence_body_of_prompt(&req.user_text()).unwrap_or_default().to_string();
        match body.as_str() {
            "clean one" => Ok("IRRELEVANT".to_string()),
            "clean two" => Err(BackendError::BackendUnavailable("down".into())),
            _ => Ok(body.chars().take(3).collect()),
        }
    });
    let filtered = domain_filter(&bundle(), &DomainPolicy::starter());
    let ex = extract_evidence(&post("p", "claim"), &filtered, &llm, &ExtractionConfig::new("m"));
    let t = &ex.bundle.groups[&StrategyId::TEXT_TO_TEXT];
    // "clean one" dropped as irrelevant; "clean two" kept unchanged after the failure.
    assert_eq!(t.len(), 1);
    assert_eq!((t[0].body.as_str(), t[0].rank), ("clean two", 1));
    assert_eq!(ex.calls, 2);
    assert_eq!(ex.warnings.len(), 1);
}

#[test]
fn extraction_respects_max_chars() {
    let llm = FnLlm(|req: &mmfc_core::backends::LlmRequest| {
        Ok(evidence_body_of_prompt(&req.user_text()).unwrap().repeat(100))
    });
    let cfg = ExtractionConfig { model_id: "m".into(), max_chars: 10 };
    let ex = extract_evidence(&post("p", "claim"), &bundle(), &llm, &cfg);
    assert!(ex.bundle.items().all(|i| i.body.chars().count() <= 10));
}
