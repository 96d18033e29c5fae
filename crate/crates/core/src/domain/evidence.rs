use std::collections::BTreeMap;
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::hostname::registrable_domain;
use super::post::{ImageRef, ValidationError};

/// One of the eight evidence retrieval strategies.
///
/// | id | input | evidence | engine |
/// |----|-------|----------|--------|
/// | 1  | text  | text     | A      |
/// | 2  | text  | image    | A      |
/// | 3  | image | text     | A      |
/// | 4  | LLM queries | image | A    |
/// | 5  | LLM queries | text  | A    |
/// | 6  | text  | text     | B      |
/// | 7  | text  | image    | B      |
/// | 8  | text  | news     | B      |
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct StrategyId(u8);

impl StrategyId {
    pub const TEXT_TO_TEXT: StrategyId = StrategyId(1);
    pub const TEXT_TO_IMAGE: StrategyId = StrategyId(2);
    pub const IMAGE_TO_TEXT: StrategyId = StrategyId(3);
    pub const QUERY_TO_IMAGE: StrategyId = StrategyId(4);
    pub const QUERY_TO_TEXT: StrategyId = StrategyId(5);
    pub const TEXT_TO_TEXT_B: StrategyId = StrategyId(6);
    pub const TEXT_TO_IMAGE_B: StrategyId = StrategyId(7);
    pub const TEXT_TO_NEWS_B: StrategyId = StrategyId(8);

    pub fn new(id: u8) -> Result<Self, ValidationError> {
        if (1..=8).contains(&id) {
            Ok(StrategyId(id))
        } else {
            Err(ValidationError::BadEnum { field: "strategy_id", value: id.to_string() })
        }
    }

    pub fn all() -> impl Iterator<Item = StrategyId> {
        (1..=8).map(StrategyId)
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn alias(self) -> &'static str {
        match self.0 {
            1 => "T->Et (A)",
            2 => "T->Ei (A)",
            3 => "I->Et (A)",
            4 => "Query->Ei (A)",
            5 => "Query->Et (A)",
            6 => "T->Et (B)",
            7 => "T->Ei (B)",
            _ => "T->Enews (B)",
        }
    }

    pub fn describe(self) -> &'static str {
        match self.0 {
            1 => "web pages found by searching the post text",
            2 => "images found by searching the post text",
            3 => "web pages that contain the post image",
            4 => "images found with model-generated queries",
            5 => "web pages found with model-generated queries",
            6 => "web pages found by searching the post text (engine B)",
            7 => "images found by searching the post text (engine B)",
            _ => "news articles found by searching the post text (engine B)",
        }
    }
}

impl TryFrom<u8> for StrategyId {
    type Error = ValidationError;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        StrategyId::new(v)
    }
}

impl From<StrategyId> for u8 {
    fn from(s: StrategyId) -> u8 {
        s.0
    }
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvidenceKind {
    Text,
    Image,
    News,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceItem {
    pub kind: EvidenceKind,
    pub strategy_id: StrategyId,
    pub rank: u32,
    pub source_url: String,
    pub domain: String,
    pub title: String,
    pub body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<ImageRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub published_date: Option<NaiveDate>,
}

impl EvidenceItem {
    /// Builds an item, deriving `domain` from `source_url`.
    pub fn new(
        kind: EvidenceKind,
        strategy_id: StrategyId,
        rank: u32,
        source_url: impl Into<String>,
        title: impl Into<String>,
        body: impl Into<String>,
    ) -> Result<Self, ValidationError> {
        let source_url = source_url.into();
        let domain = registrable_domain(&source_url)
            .ok_or_else(|| ValidationError::BadEnum { field: "source_url", value: source_url.clone() })?;
        Ok(EvidenceItem {
            kind,
            strategy_id,
            rank,
            source_url,
            domain,
            title: title.into(),
            body: body.into(),
            image_ref: None,
            published_date: None,
        })
    }

    pub fn with_image(mut self, image: ImageRef) -> Self {
        self.image_ref = Some(image);
        self
    }

    pub fn with_published(mut self, date: Option<NaiveDate>) -> Self {
        self.published_date = date;
        self
    }

    pub fn check(&self) -> Result<(), ValidationError> {
        if self.kind == EvidenceKind::Image && self.image_ref.is_none() {
            return Err(ValidationError::MissingField("image_ref"));
        }
        if registrable_domain(&self.source_url).as_deref() != Some(self.domain.as_str()) {
            return Err(ValidationError::BadEnum { field: "domain", value: self.domain.clone() });
        }
        if self.rank == 0 {
            return Err(ValidationError::BadEnum { field: "rank", value: "0".into() });
        }
        Ok(())
    }
}

/// Renumber ranks 1..n in the current order.
pub(crate) fn recompact(items: &mut [EvidenceItem]) {
    for (i, item) in items.iter_mut().enumerate() {
        item.rank = i as u32 + 1;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub strategy_id: StrategyId,
    /// Backend ids touched by the strategy, in call order.
    pub backends: Vec<String>,
    /// RFC 3339. In replay mode this is the recording time, not the wall clock.
    pub retrieved_at: String,
}

/// Evidence for one post, grouped by strategy.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EvidenceBundle {
    pub post_id: String,
    pub groups: BTreeMap<StrategyId, Vec<EvidenceItem>>,
    #[serde(default)]
    pub provenance: Vec<Provenance>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl EvidenceBundle {
    pub fn empty(post_id: impl Into<String>) -> Self {
        EvidenceBundle { post_id: post_id.into(), ..Default::default() }
    }

    pub fn item_count(&self) -> usize {
        self.groups.values().map(Vec::len).sum()
    }

    pub fn items(&self) -> impl Iterator<Item = &EvidenceItem> {
        self.groups.values().flatten()
    }

    /// Checks group keys against item strategy ids and rank ordering.
    pub fn check(&self) -> Result<(), ValidationError> {
        for (sid, items) in &self.groups {
            for (i, item) in items.iter().enumerate() {
                item.check()?;
                if item.strategy_id != *sid {
                    return Err(ValidationError::BadEnum { field: "strategy_id", value: item.strategy_id.to_string() });
                }
                if item.rank != i as u32 + 1 {
                    return Err(ValidationError::BadEnum { field: "rank", value: item.rank.to_string() });
                }
            }
        }
        Ok(())
    }
}
