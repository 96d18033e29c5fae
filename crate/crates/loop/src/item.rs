//! Review items and reviewer decisions.

use std::collections::BTreeSet;

use mmfc_core::domain::{EvidenceBundle, Label, MisinfoType, Post, StrategyId, Verdict};
use serde::{Deserialize, Serialize};

use crate::LoopError;

pub const DIGEST_ITEMS_PER_GROUP: usize = 5;
pub const DIGEST_EXCERPT_CHARS: usize = 280;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pending,
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Accept,
    Reject,
}

/// A decision as submitted by a reviewer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionInput {
    pub action: Action,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_label: Option<Label>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub types: BTreeSet<MisinfoType>,
    pub reviewer_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl DecisionInput {
    pub fn accept(label: Label, types: impl IntoIterator<Item = MisinfoType>, reviewer: &str) -> Self {
        DecisionInput {
            action: Action::Accept,
            final_label: Some(label),
            types: types.into_iter().collect(),
            reviewer_id: reviewer.into(),
            note: None,
        }
    }

    pub fn reject(reviewer: &str) -> Self {
        DecisionInput {
            action: Action::Reject,
            final_label: None,
            types: BTreeSet::new(),
            reviewer_id: reviewer.into(),
            note: None,
        }
    }

    /// Accepting needs a label; types go with, and only with, a Fake label.
    pub fn validate(&self) -> Result<(), LoopError> {
        let bad = |m: &str| Err(LoopError::InvalidDecision(m.into()));
        if self.reviewer_id.trim().is_empty() {
            return bad("reviewer_id is empty");
        }
        match (self.action, self.final_label) {
            (Action::Accept, None) => bad("accept needs a final_label"),
            (Action::Accept, Some(Label::Fake)) if self.types.is_empty() => bad("a Fake label needs at least one type"),
            (_, Some(Label::Fake)) => Ok(()),
            _ if !self.types.is_empty() => bad("types are only allowed with a Fake label"),
            _ => Ok(()),
        }
    }

    pub fn status(&self) -> Status {
        match self.action {
            Action::Accept => Status::Accepted,
            Action::Reject => Status::Rejected,
        }
    }
}

/// A recorded decision. `decided_at` is the journal time of the decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_label: Option<Label>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub types: BTreeSet<MisinfoType>,
    pub reviewer_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub decided_at: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DigestItem {
    pub rank: u32,
    pub domain: String,
    pub url: String,
    pub title: String,
    pub excerpt: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DigestGroup {
    pub strategy_id: StrategyId,
    pub description: String,
    /// Items the group held before truncation to the digest.
    pub total: usize,
    pub items: Vec<DigestItem>,
}

/// Compact evidence summary shown next to a verdict.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceDigest {
    pub groups: Vec<DigestGroup>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn excerpt(s: &str) -> String {
    let mut out: String = s.chars().take(DIGEST_EXCERPT_CHARS).collect();
    if s.chars().count() > DIGEST_EXCERPT_CHARS {
        out.push_str("...");
    }
    out
}

impl EvidenceDigest {
    /// Keeps every group, including empty ones, with its top items.
    pub fn from_bundle(bundle: &EvidenceBundle) -> Self {
        let groups = bundle
            .groups
            .iter()
            .map(|(sid, items)| DigestGroup {
                strategy_id: *sid,
                description: sid.describe().into(),
                total: items.len(),
                items: items
                    .iter()
                    .take(DIGEST_ITEMS_PER_GROUP)
                    .map(|it| DigestItem {
                        rank: it.rank,
                        domain: it.domain.clone(),
                        url: it.source_url.clone(),
                        title: it.title.clone(),
                        excerpt: excerpt(&it.body),
                    })
                    .collect(),
            })
            .collect();
        EvidenceDigest { groups, warnings: bundle.warnings.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assessment {
    pub verdict: Verdict,
    pub evidence_digest: EvidenceDigest,
    pub fingerprint: String,
    pub assessed_at: String,
}

/// Why the latest detection attempt failed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssessError {
    pub fingerprint: String,
    pub tag: String,
    pub message: String,
    pub at: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub id: String,
    #[serde(with = "post_serde")]
    pub post: Post,
    pub content_key: String,
    pub ingested_at: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assessment: Option<Assessment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<AssessError>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<Decision>,
}

impl ReviewItem {
    pub fn is_assessed(&self) -> bool {
        self.assessment.is_some()
    }

    pub fn predicted(&self) -> Option<Label> {
        self.assessment.as_ref().map(|a| a.verdict.label)
    }

    /// The post as a dataset record carrying the reviewer's label and types.
    pub fn to_record(&self) -> Option<Post> {
        let d = self.decision.as_ref()?;
        let mut post = self.post.clone();
        post.label = d.final_label;
        post.misinfo_types = if d.final_label == Some(Label::Fake) { d.types.clone() } else { Default::default() };
        Some(post)
    }
}

/// Posts serialize as dataset lines and deserialize through validation.
pub(crate) mod post_serde {
    use mmfc_core::domain::{validate_post, IngestContext, Post, RawPost};
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(p: &Post, s: S) -> Result<S::Ok, S::Error> {
        p.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Post, D::Error> {
        let raw = RawPost::deserialize(d)?;
        validate_post(raw, &IngestContext::default()).map_err(D::Error::custom)
    }
}
