#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

use chrono::{DateTime, TimeZone, Utc};
use mmfc_core::backends::{BackendConfig, BackendMode, Backends};
use mmfc_core::domain::{IngestContext, Label, Post, ReasoningMethod, StrategyId, TokenUsage, Verdict};
use mmfc_core::pipeline::{Pipeline, PipelineConfig};
use mmfc_core::postprocess::DomainPolicy;
use mmfc_core::reasoning::ReasoningConfig;
use mmfc_core::testkit::{gateway, SearchIndex};
use mmfc_loop::service::Clock;
use mmfc_loop::{DetectFailure, EvidenceDigest, FnDetector};
use serde_json::Value;

pub fn post(id: &str, text: &str) -> Post {
    let line = serde_json::json!({
        "id": id,
        "text": text,
        "date": "2024-06-01",
        "images": [{ "sha256": mmfc_core::domain::ContentHash::of_bytes(text.as_bytes()).to_string() }],
    });
    Post::from_json_line(&line.to_string(), &IngestContext::default()).unwrap()
}

pub fn verdict(label: Label, confidence: u8) -> Verdict {
    Verdict {
        label,
        confidence,
        rationale: format!("scripted {}", label.as_str()),
        intermediates: None,
        reasoning_method: ReasoningMethod::CoT,
        model_id: "scripted".into(),
        token_usage: TokenUsage::default(),
        retries: 0,
        warnings: vec![],
    }
}

type AssessFn = Box<dyn Fn(&Post) -> Result<(Verdict, EvidenceDigest), DetectFailure> + Send + Sync>;

/// Labels a post Fake when its text contains "fake"; confidence is taken
/// from the digits in the text (default 50). Text containing "boom" fails.
pub fn scripted(fingerprint: &str) -> FnDetector<AssessFn> {
    FnDetector::new(
        fingerprint,
        Box::new(|p: &Post| {
            if p.text.contains("boom") {
                return Err(DetectFailure { tag: "CacheMiss".into(), message: "no recording".into() });
            }
            let label = if p.text.contains("fake") { Label::Fake } else { Label::Real };
            let digits: String = p.text.chars().filter(char::is_ascii_digit).collect();
            let conf = digits.parse::<u32>().map(|d| (d % 101) as u8).unwrap_or(50);
            Ok((verdict(label, conf), EvidenceDigest::default()))
        }) as AssessFn,
    )
}

/// A clock advancing one second per reading.
pub fn ticking_clock() -> Clock {
    let t = Arc::new(AtomicI64::new(0));
    let start: DateTime<Utc> = Utc.with_ymd_and_hms(2024, 7, 1, 0, 0, 0).unwrap();
    Arc::new(move || start + chrono::Duration::seconds(t.fetch_add(1, Ordering::SeqCst)))
}

pub fn case_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/case500")
}

/// Pipeline over the case-study evidence: text search only, CoT, rule judge.
pub fn case_pipeline() -> Pipeline {
    let mut index = SearchIndex::new();
    for line in std::fs::read_to_string(case_dir().join("evidence.jsonl")).unwrap().lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        let key = (v["op"].as_str().unwrap().to_string(), v["q"].as_str().unwrap().to_string());
        index.insert(key, v["results"].as_array().unwrap().clone());
    }
    let cfg: BackendConfig = toml::from_str(
        "[engines.a]\nendpoint = \"http://gateway.invalid\"\n[llm]\nid = \"stub-llm\"\nendpoint = \"http://gateway.invalid\"\n",
    )
    .unwrap();
    let backends = Backends::from_config(&cfg, BackendMode::Live, None, gateway(index)).unwrap();
    let config = PipelineConfig::new(ReasoningConfig::new(ReasoningMethod::CoT, "stub-judge"))
        .with_strategies([StrategyId::TEXT_TO_TEXT]);
    Pipeline::new(&backends, config, DomainPolicy::starter()).unwrap().with_image_dir(Some(&case_dir()))
}
