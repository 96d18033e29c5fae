//! The review loop: ingest, assess, review, export.
//!
//! Writes go through one journal lock and are applied only after the entry
//! is appended. Readers clone an `Arc` of the current state and never wait
//! on a detection run.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use chrono::{DateTime, SecondsFormat, Utc};
use mmfc_core::domain::{IngestContext, Label, Post};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detector::Detector;
use crate::item::{DecisionInput, ReviewItem, Status};
use crate::journal::Journal;
use crate::state::{Entry, Event, Outcome, State};
use crate::LoopError;

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

pub const DEFAULT_PAGE: usize = 50;
pub const MAX_PAGE: usize = 500;
pub const DEFAULT_SNAPSHOT_EVERY: u64 = 256;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ingested {
    pub item_id: String,
    pub duplicate: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub assessed: usize,
    pub failed: usize,
    /// Selected items already assessed under this fingerprint or decided.
    pub skipped: usize,
    pub unknown: Vec<String>,
    pub fingerprint: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueQuery {
    /// Only items predicted with this label.
    #[serde(default)]
    pub label: Option<Label>,
    #[serde(default)]
    pub limit: Option<usize>,
    /// Cursor returned as `next` by the previous page.
    #[serde(default)]
    pub after: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueuePage {
    pub items: Vec<ReviewItem>,
    pub next: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportFilter {
    #[serde(default)]
    pub label: Option<Label>,
}

/// Triage order: predicted Fake first, then confidence descending, then id.
pub fn queue_key(item: &ReviewItem) -> Option<String> {
    let v = &item.assessment.as_ref()?.verdict;
    let class = if v.label == Label::Fake { 0 } else { 1 };
    Some(format!("{class}.{:03}.{}", 100 - v.confidence.min(100) as u32, item.id))
}

/// Accepted records in export order.
pub fn export_records(state: &State, filter: &ExportFilter) -> Vec<Post> {
    let mut accepted: Vec<&ReviewItem> = state
        .items()
        .filter(|i| i.status == Status::Accepted)
        .filter(|i| filter.label.is_none() || i.decision.as_ref().and_then(|d| d.final_label) == filter.label)
        .collect();
    accepted.sort_by(|a, b| {
        let at = |i: &ReviewItem| i.decision.as_ref().map(|d| d.decided_at.clone()).unwrap_or_default();
        at(a).cmp(&at(b)).then_with(|| a.id.cmp(&b.id))
    });
    accepted.into_iter().filter_map(ReviewItem::to_record).collect()
}

/// The export file: one dataset line per record.
pub fn render_export(records: &[Post]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        out.extend_from_slice(r.to_json_line().as_bytes());
        out.push(b'\n');
    }
    out
}

pub struct LoopService {
    journal: Mutex<Journal>,
    state: RwLock<Arc<State>>,
    clock: Clock,
    snapshot_every: u64,
}

impl LoopService {
    pub fn in_memory() -> Self {
        Self::with_journal(Journal::in_memory(), State::default())
    }

    /// Opens the journal directory and rebuilds state from it.
    pub fn open(dir: &Path) -> Result<Self, LoopError> {
        let (journal, state) = Journal::open(dir)?;
        Ok(Self::with_journal(journal, state))
    }

    fn with_journal(journal: Journal, state: State) -> Self {
        LoopService {
            journal: Mutex::new(journal),
            state: RwLock::new(Arc::new(state)),
            clock: Arc::new(Utc::now),
            snapshot_every: DEFAULT_SNAPSHOT_EVERY,
        }
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    /// Snapshot cadence in journal entries; 0 disables periodic snapshots.
    pub fn with_snapshot_every(mut self, n: u64) -> Self {
        self.snapshot_every = n;
        self
    }

    pub fn state(&self) -> Arc<State> {
        self.state.read().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub fn item(&self, id: &str) -> Option<ReviewItem> {
        self.state().item(id).cloned()
    }

    pub fn journal_entries(&self) -> Result<Vec<Entry>, LoopError> {
        self.lock().entries()
    }

    /// Writes a snapshot and syncs the journal.
    pub fn flush(&self) -> Result<(), LoopError> {
        let state = self.state();
        self.lock().snapshot(&state)
    }

    fn lock(&self) -> MutexGuard<'_, Journal> {
        self.journal.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Appends and applies one event. The caller holds the journal lock.
    fn commit(&self, journal: &mut Journal, event: Event) -> Result<Entry, LoopError> {
        let current = self.state();
        let entry =
            Entry { seq: current.last_seq + 1, at: (self.clock)().to_rfc3339_opts(SecondsFormat::Micros, true), event };
        let mut next = (*current).clone();
        next.apply(&entry)?;
        journal.append(&entry)?;
        *self.state.write().unwrap_or_else(|p| p.into_inner()) = Arc::new(next);
        if self.snapshot_every > 0 && entry.seq.is_multiple_of(self.snapshot_every) {
            if let Err(e) = journal.snapshot(&self.state()) {
                log::warn!("snapshot failed: {e}");
            }
        }
        Ok(entry)
    }

    /// Ingests an unlabeled post. A resubmission of the same text and images
    /// returns the existing item with `duplicate` set.
    pub fn ingest_post(&self, post: Post) -> Result<Ingested, LoopError> {
        if post.label.is_some() || !post.misinfo_types.is_empty() {
            return Err(LoopError::LabelledPost);
        }
        let key = post.content_key();
        let mut journal = self.lock();
        let state = self.state();
        if let Some(existing) = state.by_content_key(&key) {
            return Ok(Ingested { item_id: existing.id.clone(), duplicate: true });
        }
        if let Some(existing) = state.by_post_id(&post.id) {
            return Err(LoopError::PostIdConflict { post_id: post.id, item_id: existing.id.clone() });
        }
        let item_id = state.next_item_id();
        self.commit(&mut journal, Event::Ingested { item_id: item_id.clone(), post, content_key: key })?;
        Ok(Ingested { item_id, duplicate: false })
    }

    /// Parses and ingests one dataset line.
    pub fn ingest_json(&self, body: &str) -> Result<Ingested, LoopError> {
        self.ingest_post(Post::from_json_line(body, &IngestContext::default())?)
    }

    /// Assesses pending items (all of them, or those in `ids`) that have no
    /// assessment under the detector's fingerprint. Detection runs outside
    /// the journal lock; per-item failures are journaled, never fatal.
    pub fn run_detection(&self, ids: Option<&[String]>, detector: &dyn Detector) -> Result<RunSummary, LoopError> {
        let fp = detector.fingerprint();
        let state = self.state();
        let mut summary = RunSummary { fingerprint: fp.clone(), ..Default::default() };
        let candidates: Vec<&ReviewItem> = match ids {
            None => state.items().collect(),
            Some(ids) => {
                let wanted: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
                summary.unknown = wanted.iter().filter(|id| state.item(id).is_none()).map(|s| s.to_string()).collect();
                wanted.iter().filter_map(|id| state.item(id)).collect()
            }
        };
        let needs =
            |i: &ReviewItem| i.status == Status::Pending && i.assessment.as_ref().is_none_or(|a| a.fingerprint != fp);
        let todo: Vec<&ReviewItem> = candidates.iter().copied().filter(|i| needs(i)).collect();
        summary.skipped = candidates.len() - todo.len();

        let results: Vec<(String, Outcome)> = todo
            .par_iter()
            .map(|item| {
                let outcome = match detector.assess(&item.post) {
                    Ok((verdict, evidence_digest)) => Outcome::Ok { verdict, evidence_digest },
                    Err(f) => Outcome::Failed { tag: f.tag, message: f.message },
                };
                (item.id.clone(), outcome)
            })
            .collect();

        let mut journal = self.lock();
        for (item_id, outcome) in results {
            // A concurrent run or decision may have got there first.
            if !self.state().item(&item_id).is_some_and(needs) {
                summary.skipped += 1;
                continue;
            }
            match &outcome {
                Outcome::Ok { .. } => summary.assessed += 1,
                Outcome::Failed { .. } => summary.failed += 1,
            }
            self.commit(&mut journal, Event::Assessed { item_id, fingerprint: fp.clone(), outcome })?;
        }
        Ok(summary)
    }

    /// Assessed, undecided items in triage order, paginated by key.
    pub fn review_queue(&self, q: &QueueQuery) -> Result<QueuePage, LoopError> {
        let limit = q.limit.unwrap_or(DEFAULT_PAGE);
        if limit == 0 || limit > MAX_PAGE {
            return Err(LoopError::InvalidQuery(format!("limit must be in 1..={MAX_PAGE}")));
        }
        let state = self.state();
        let mut keyed: Vec<(String, &ReviewItem)> = state
            .items()
            .filter(|i| i.status == Status::Pending)
            .filter(|i| q.label.is_none() || i.predicted() == q.label)
            .filter_map(|i| queue_key(i).map(|k| (k, i)))
            .filter(|(k, _)| q.after.as_ref().is_none_or(|after| k > after))
            .collect();
        keyed.sort_by(|a, b| a.0.cmp(&b.0));
        let more = keyed.len() > limit;
        keyed.truncate(limit);
        let next = if more { keyed.last().map(|(k, _)| k.clone()) } else { None };
        Ok(QueuePage { items: keyed.into_iter().map(|(_, i)| i.clone()).collect(), next })
    }

    pub fn submit_decision(&self, item_id: &str, decision: DecisionInput) -> Result<ReviewItem, LoopError> {
        decision.validate()?;
        let mut journal = self.lock();
        let state = self.state();
        let item = state.item(item_id).ok_or_else(|| LoopError::UnknownItem(item_id.into()))?;
        if item.status != Status::Pending {
            return Err(LoopError::AlreadyDecided(item_id.into()));
        }
        if !item.is_assessed() {
            return Err(LoopError::InvalidDecision(format!("item {item_id} has not been assessed")));
        }
        self.commit(&mut journal, Event::Decided { item_id: item_id.into(), decision })?;
        Ok(self.state().item(item_id).cloned().expect("item just decided"))
    }

    /// Writes accepted items as a dataset file and journals the export.
    pub fn export(&self, filter: &ExportFilter, out: &mut dyn Write) -> Result<usize, LoopError> {
        let mut journal = self.lock();
        let records = export_records(&self.state(), filter);
        let bytes = render_export(&records);
        out.write_all(&bytes)?;
        let sha256 = hex::encode(Sha256::digest(&bytes));
        self.commit(&mut journal, Event::Exported { records: records.len(), sha256 })?;
        Ok(records.len())
    }
}
