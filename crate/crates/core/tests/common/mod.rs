#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use mmfc_core::backends::{BackendConfig, BackendMode, Backends, CountingTransport};
use mmfc_core::domain::{ContentHash, EvidenceItem, EvidenceKind, IngestContext, Post, StrategyId};
use mmfc_core::evaluation::load_posts;

pub const FIXTURE_MODEL: &str = "stub-judge";

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/replay20")
}

pub fn fixture_posts() -> Vec<Post> {
    load_posts(&fixture_dir().join("posts.jsonl")).expect("fixture loads")
}

/// Replay-mode backends over the committed fixture cache.
pub fn replay_backends() -> (Backends, Arc<CountingTransport>) {
    let transport = Arc::new(CountingTransport::offline());
    let cfg: BackendConfig = toml::from_str("[llm]\nid = \"stub-llm\"\n").unwrap();
    let b = Backends::from_config(&cfg, BackendMode::Replay, Some(&fixture_dir().join("cache")), transport.clone())
        .expect("replay backends");
    (b, transport)
}

pub fn hash_of(s: &str) -> ContentHash {
    ContentHash::of_bytes(s.as_bytes())
}

/// A valid unlabelled post with one image.
pub fn post(id: &str, text: &str) -> Post {
    let line = serde_json::json!({
        "id": id,
        "text": text,
        "date": "2024-05-01",
        "images": [{ "sha256": hash_of(id).to_string() }],
    })
    .to_string();
    Post::from_json_line(&line, &IngestContext::default()).unwrap()
}

pub fn item(sid: u8, rank: u32, url: &str, body: &str) -> EvidenceItem {
    EvidenceItem::new(EvidenceKind::Text, StrategyId::new(sid).unwrap(), rank, url, format!("title {rank}"), body)
        .unwrap()
}
