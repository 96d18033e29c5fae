//! Service state as a fold over journal events.

use std::collections::BTreeMap;

use mmfc_core::domain::{Post, Verdict};
use serde::{Deserialize, Serialize};

use crate::item::{AssessError, Assessment, Decision, DecisionInput, EvidenceDigest, ReviewItem, Status};
use crate::LoopError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum Outcome {
    Ok { verdict: Verdict, evidence_digest: EvidenceDigest },
    Failed { tag: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Ingested {
        item_id: String,
        #[serde(with = "crate::item::post_serde")]
        post: Post,
        content_key: String,
    },
    Assessed {
        item_id: String,
        fingerprint: String,
        outcome: Outcome,
    },
    Decided {
        item_id: String,
        decision: DecisionInput,
    },
    Exported {
        records: usize,
        sha256: String,
    },
}

/// One journal line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entry {
    pub seq: u64,
    /// RFC 3339, UTC.
    pub at: String,
    pub event: Event,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct State {
    pub last_seq: u64,
    pub exports: u64,
    items: BTreeMap<String, ReviewItem>,
    by_content: BTreeMap<String, String>,
    by_post_id: BTreeMap<String, String>,
}

fn corrupt(seq: u64, why: impl std::fmt::Display) -> LoopError {
    LoopError::Journal(format!("entry {seq}: {why}"))
}

impl State {
    pub fn fold<'a>(entries: impl IntoIterator<Item = &'a Entry>) -> Result<State, LoopError> {
        let mut s = State::default();
        for e in entries {
            s.apply(e)?;
        }
        Ok(s)
    }

    /// Applies one entry. Sequence gaps and illegal transitions are errors.
    pub fn apply(&mut self, entry: &Entry) -> Result<(), LoopError> {
        let seq = entry.seq;
        if seq != self.last_seq + 1 {
            return Err(corrupt(seq, format!("expected seq {}", self.last_seq + 1)));
        }
        match &entry.event {
            Event::Ingested { item_id, post, content_key } => {
                if self.items.contains_key(item_id) {
                    return Err(corrupt(seq, format!("item {item_id} ingested twice")));
                }
                if self.by_content.contains_key(content_key) || self.by_post_id.contains_key(&post.id) {
                    return Err(corrupt(seq, format!("duplicate post {}", post.id)));
                }
                self.by_content.insert(content_key.clone(), item_id.clone());
                self.by_post_id.insert(post.id.clone(), item_id.clone());
                self.items.insert(
                    item_id.clone(),
                    ReviewItem {
                        id: item_id.clone(),
                        post: post.clone(),
                        content_key: content_key.clone(),
                        ingested_at: entry.at.clone(),
                        status: Status::Pending,
                        assessment: None,
                        error: None,
                        decision: None,
                    },
                );
            }
            Event::Assessed { item_id, fingerprint, outcome } => {
                let item =
                    self.items.get_mut(item_id).ok_or_else(|| corrupt(seq, format!("unknown item {item_id}")))?;
                if item.status != Status::Pending {
                    return Err(corrupt(seq, format!("item {item_id} assessed after decision")));
                }
                match outcome {
                    Outcome::Ok { verdict, evidence_digest } => {
                        item.assessment = Some(Assessment {
                            verdict: verdict.clone(),
                            evidence_digest: evidence_digest.clone(),
                            fingerprint: fingerprint.clone(),
                            assessed_at: entry.at.clone(),
                        });
                        item.error = None;
                    }
                    Outcome::Failed { tag, message } => {
                        item.error = Some(AssessError {
                            fingerprint: fingerprint.clone(),
                            tag: tag.clone(),
                            message: message.clone(),
                            at: entry.at.clone(),
                        });
                    }
                }
            }
            Event::Decided { item_id, decision } => {
                let item =
                    self.items.get_mut(item_id).ok_or_else(|| corrupt(seq, format!("unknown item {item_id}")))?;
                if item.status != Status::Pending || item.assessment.is_none() {
                    return Err(corrupt(seq, format!("item {item_id} is not awaiting review")));
                }
                decision.validate().map_err(|e| corrupt(seq, e))?;
                item.status = decision.status();
                item.decision = Some(Decision {
                    final_label: decision.final_label,
                    types: decision.types.clone(),
                    reviewer_id: decision.reviewer_id.clone(),
                    note: decision.note.clone(),
                    decided_at: entry.at.clone(),
                });
            }
            Event::Exported { .. } => self.exports += 1,
        }
        self.last_seq = seq;
        Ok(())
    }

    pub fn item(&self, id: &str) -> Option<&ReviewItem> {
        self.items.get(id)
    }

    pub fn items(&self) -> impl Iterator<Item = &ReviewItem> {
        self.items.values()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn by_content_key(&self, key: &str) -> Option<&ReviewItem> {
        self.by_content.get(key).and_then(|id| self.items.get(id))
    }

    pub fn by_post_id(&self, post_id: &str) -> Option<&ReviewItem> {
        self.by_post_id.get(post_id).and_then(|id| self.items.get(id))
    }

    pub fn next_item_id(&self) -> String {
        format!("item-{:06}", self.items.len() + 1)
    }
}
