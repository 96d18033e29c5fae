use std::collections::HashSet;
use std::sync::Arc;

use base64::Engine as _;
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::domain::{ContentHash, EvidenceItem, EvidenceKind, ImageRef, StrategyId};

use super::cache::{normalize_whitespace, Recorder};
use super::images::ImageStore;
use super::transport::{HttpRequest, Transport};
use super::BackendError;

/// Which configured engine to hit. A is the Google-compatible endpoint, B
/// the DuckDuckGo-compatible one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchOp {
    TextSearch,
    ImageSearch,
    ReverseImageSearch,
    NewsSearch,
}

impl SearchOp {
    pub fn as_str(self) -> &'static str {
        match self {
            SearchOp::TextSearch => "text",
            SearchOp::ImageSearch => "image",
            SearchOp::ReverseImageSearch => "reverse_image",
            SearchOp::NewsSearch => "news",
        }
    }

    fn kind(self) -> EvidenceKind {
        match self {
            SearchOp::TextSearch | SearchOp::ReverseImageSearch => EvidenceKind::Text,
            SearchOp::ImageSearch => EvidenceKind::Image,
            SearchOp::NewsSearch => EvidenceKind::News,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchQuery {
    Text(String),
    Image(ContentHash),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchRequest {
    pub engine: Engine,
    pub op: SearchOp,
    pub query: SearchQuery,
    pub k: usize,
}

impl SearchRequest {
    pub fn text(engine: Engine, op: SearchOp, query: impl Into<String>, k: usize) -> Self {
        SearchRequest { engine, op, query: SearchQuery::Text(query.into()), k }
    }

    pub fn reverse_image(engine: Engine, image: ContentHash, k: usize) -> Self {
        SearchRequest { engine, op: SearchOp::ReverseImageSearch, query: SearchQuery::Image(image), k }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.k == 0 {
            return Err(BackendError::InvalidRequest("k must be at least 1".into()));
        }
        match (&self.op, &self.query) {
            (SearchOp::ReverseImageSearch, SearchQuery::Image(_)) => Ok(()),
            (SearchOp::ReverseImageSearch, _) => {
                Err(BackendError::InvalidRequest("reverse image search takes an image hash".into()))
            }
            (_, SearchQuery::Text(t)) if !t.trim().is_empty() => Ok(()),
            _ => Err(BackendError::InvalidRequest(format!("{} search takes non-empty text", self.op.as_str()))),
        }
    }

    /// Canonical form used for cache keys.
    pub fn canonical(&self) -> Value {
        let query = match &self.query {
            SearchQuery::Text(t) => json!({ "text": normalize_whitespace(t) }),
            SearchQuery::Image(h) => json!({ "image": h.as_str() }),
        };
        json!({
            "engine": self.engine,
            "op": self.op.as_str(),
            "query": query,
            "k": self.k,
        })
    }

    /// The strategy a bare call of this shape corresponds to.
    fn default_strategy(&self) -> StrategyId {
        match (self.engine, self.op) {
            (Engine::A, SearchOp::TextSearch) => StrategyId::TEXT_TO_TEXT,
            (Engine::A, SearchOp::ImageSearch) => StrategyId::TEXT_TO_IMAGE,
            (_, SearchOp::ReverseImageSearch) => StrategyId::IMAGE_TO_TEXT,
            (Engine::B, SearchOp::TextSearch) => StrategyId::TEXT_TO_TEXT_B,
            (Engine::B, SearchOp::ImageSearch) => StrategyId::TEXT_TO_IMAGE_B,
            (_, SearchOp::NewsSearch) => StrategyId::TEXT_TO_NEWS_B,
        }
    }
}

/// One raw result as returned by an engine. This is what gets recorded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHit {
    pub url: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub snippet: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<ImageRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub published: Option<NaiveDate>,
}

pub trait SearchEngine: Send + Sync {
    fn search(&self, req: &SearchRequest, image_bytes: Option<&[u8]>) -> Result<Vec<SearchHit>, BackendError>;
}

/// Talks to a search gateway over HTTP+JSON.
///
/// Request: `POST {endpoint}/search` with
/// `{"op": "text"|"image"|"reverse_image"|"news", "q": str, "num": k, "image_base64": str?}`.
/// Response: `{"results": [{"url", "title", "snippet", "image_url"?, "image_sha256"?, "date"?}]}`.
/// Image results without a hash are downloaded once and hashed.
pub struct HttpSearchEngine {
    endpoint: String,
    api_key: Option<String>,
    transport: Arc<dyn Transport>,
}

impl HttpSearchEngine {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, transport: Arc<dyn Transport>) -> Self {
        HttpSearchEngine { endpoint: endpoint.into(), api_key, transport }
    }

    fn hit_from_json(&self, v: &Value, want_image: bool) -> Result<Option<SearchHit>, BackendError> {
        let s = |k: &str| v.get(k).and_then(Value::as_str).unwrap_or_default().to_string();
        let url = s("url");
        if url.is_empty() {
            return Ok(None);
        }
        let published = v
            .get("date")
            .and_then(Value::as_str)
            .and_then(|d| NaiveDate::parse_from_str(d.get(..10).unwrap_or(d), "%Y-%m-%d").ok());
        let mut image = None;
        if want_image {
            let image_url = v.get("image_url").and_then(Value::as_str).map(str::to_string);
            let hash = match v.get("image_sha256").and_then(Value::as_str) {
                Some(h) => ContentHash::try_from(h.to_string()).ok(),
                None => match &image_url {
                    Some(u) => match self.transport.send(HttpRequest::get(u.clone())).and_then(|r| r.ok()) {
                        Ok(resp) => Some(ContentHash::of_bytes(&resp.body)),
                        Err(e) => {
                            log::warn!("dropping image result {u}: {e}");
                            None
                        }
                    },
                    None => None,
                },
            };
            match hash {
                Some(sha256) => image = Some(ImageRef { sha256, location: image_url }),
                None => return Ok(None),
            }
        }
        Ok(Some(SearchHit { url, title: s("title"), snippet: s("snippet"), image, published }))
    }
}

impl SearchEngine for HttpSearchEngine {
    fn search(&self, req: &SearchRequest, image_bytes: Option<&[u8]>) -> Result<Vec<SearchHit>, BackendError> {
        let mut body = json!({ "op": req.op.as_str(), "num": req.k });
        match &req.query {
            SearchQuery::Text(t) => body["q"] = json!(normalize_whitespace(t)),
            SearchQuery::Image(h) => {
                body["q"] = json!(h.as_str());
                if let Some(b) = image_bytes {
                    body["image_base64"] = json!(base64::engine::general_purpose::STANDARD.encode(b));
                }
            }
        }
        let url = format!("{}/search", self.endpoint.trim_end_matches('/'));
        let resp =
            self.transport.send(HttpRequest::post_json(url, &body).bearer(self.api_key.as_deref()))?.ok()?.json()?;
        let results = resp
            .get("results")
            .and_then(Value::as_array)
            .ok_or_else(|| BackendError::Decode("response has no `results` array".into()))?;
        let want_image = req.op == SearchOp::ImageSearch;
        let mut hits = Vec::new();
        for r in results {
            if let Some(h) = self.hit_from_json(r, want_image)? {
                hits.push(h);
            }
        }
        Ok(hits)
    }
}

/// An engine answering from a closure. Handy for recording synthetic fixtures.
pub struct FnSearchEngine<F>(pub F);

impl<F> SearchEngine for FnSearchEngine<F>
where
    F: Fn(&SearchRequest) -> Result<Vec<SearchHit>, BackendError> + Send + Sync,
{
    fn search(&self, req: &SearchRequest, _image_bytes: Option<&[u8]>) -> Result<Vec<SearchHit>, BackendError> {
        (self.0)(req)
    }
}

#[derive(Clone)]
pub struct EngineSlot {
    /// Stable id; part of every cache key.
    pub id: String,
    pub live: Option<Arc<dyn SearchEngine>>,
}

impl EngineSlot {
    pub fn new(id: impl Into<String>, live: Option<Arc<dyn SearchEngine>>) -> Self {
        EngineSlot { id: id.into(), live }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchResults {
    pub items: Vec<EvidenceItem>,
    pub backend: String,
    pub retrieved_at: String,
    pub warnings: Vec<String>,
}

/// The four search operations over both engines, behind record/replay.
#[derive(Clone)]
pub struct SearchService {
    engine_a: EngineSlot,
    engine_b: EngineSlot,
    images: Arc<ImageStore>,
    recorder: Recorder,
}

impl SearchService {
    pub fn new(engine_a: EngineSlot, engine_b: EngineSlot, images: Arc<ImageStore>, recorder: Recorder) -> Self {
        SearchService { engine_a, engine_b, images, recorder }
    }

    pub fn images(&self) -> &Arc<ImageStore> {
        &self.images
    }

    pub fn text_search(&self, req: &SearchRequest) -> Result<SearchResults, BackendError> {
        self.expect_op(req, SearchOp::TextSearch)?;
        self.run(req)
    }

    pub fn image_search(&self, req: &SearchRequest) -> Result<SearchResults, BackendError> {
        self.expect_op(req, SearchOp::ImageSearch)?;
        self.run(req)
    }

    pub fn reverse_image_search(&self, req: &SearchRequest) -> Result<SearchResults, BackendError> {
        self.expect_op(req, SearchOp::ReverseImageSearch)?;
        self.run(req)
    }

    pub fn news_search(&self, req: &SearchRequest) -> Result<SearchResults, BackendError> {
        self.expect_op(req, SearchOp::NewsSearch)?;
        self.run(req)
    }

    /// Dispatch on `req.op`.
    pub fn search(&self, req: &SearchRequest) -> Result<SearchResults, BackendError> {
        self.run(req)
    }

    fn expect_op(&self, req: &SearchRequest, op: SearchOp) -> Result<(), BackendError> {
        if req.op != op {
            return Err(BackendError::InvalidRequest(format!(
                "expected a {} request, got {}",
                op.as_str(),
                req.op.as_str()
            )));
        }
        Ok(())
    }

    fn run(&self, req: &SearchRequest) -> Result<SearchResults, BackendError> {
        req.validate()?;
        let slot = match req.engine {
            Engine::A => &self.engine_a,
            Engine::B => &self.engine_b,
        };
        let canonical = req.canonical();
        let (hits, retrieved_at): (Vec<SearchHit>, String) =
            self.recorder.call(&slot.id, req.op.as_str(), &canonical, || {
                let live = slot
                    .live
                    .as_ref()
                    .ok_or_else(|| BackendError::BackendUnavailable(format!("engine {} not configured", slot.id)))?;
                let bytes = match &req.query {
                    SearchQuery::Image(h) => Some(self.images.bytes(h)?),
                    SearchQuery::Text(_) => None,
                };
                live.search(req, bytes.as_deref())
            })?;
        let (items, warnings) = hits_to_items(req, hits);
        Ok(SearchResults { items, backend: slot.id.clone(), retrieved_at, warnings })
    }
}

/// Turns raw hits into ranked evidence: drops unusable hits, removes
/// duplicate images, truncates to `k`, numbers ranks from 1.
fn hits_to_items(req: &SearchRequest, hits: Vec<SearchHit>) -> (Vec<EvidenceItem>, Vec<String>) {
    let kind = req.op.kind();
    let sid = req.default_strategy();
    let mut seen_images = HashSet::new();
    let mut items = Vec::new();
    let mut warnings = Vec::new();
    for hit in hits {
        if items.len() == req.k {
            break;
        }
        if kind == EvidenceKind::Image {
            match &hit.image {
                Some(img) if !seen_images.insert(img.sha256.clone()) => continue,
                Some(_) => {}
                None => {
                    warnings.push(format!("image result without image: {}", hit.url));
                    continue;
                }
            }
        }
        let rank = items.len() as u32 + 1;
        match EvidenceItem::new(kind, sid, rank, &hit.url, hit.title, hit.snippet) {
            Ok(mut item) => {
                item.image_ref = if kind == EvidenceKind::Image { hit.image } else { None };
                item.published_date = hit.published;
                items.push(item);
            }
            Err(_) => warnings.push(format!("unparseable result url: {}", hit.url)),
        }
    }
    (items, warnings)
}
