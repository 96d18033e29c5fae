//! Detection-in-the-loop review service.
//!
//! Posts are ingested, assessed by a [`Detector`], queued for reviewers and,
//! once accepted, exported as dataset records. Every state change is an
//! entry in an append-only [`Journal`]; [`State`] is a fold over it.

pub mod detector;
pub mod http;
pub mod item;
pub mod journal;
pub mod service;
pub mod state;

use mmfc_core::domain::ValidationError;
use thiserror::Error;

pub use detector::{DetectFailure, Detector, FnDetector};
pub use item::{Action, Decision, DecisionInput, EvidenceDigest, ReviewItem, Status};
pub use journal::Journal;
pub use service::{ExportFilter, Ingested, LoopService, QueuePage, QueueQuery, RunSummary};
pub use state::{Entry, Event, Outcome, State};

#[derive(Debug, Error)]
pub enum LoopError {
    #[error("invalid post: {0}")]
    Validation(#[from] ValidationError),
    #[error("loop posts must be unlabeled")]
    LabelledPost,
    #[error("post id {post_id} already ingested as {item_id} with different content")]
    PostIdConflict { post_id: String, item_id: String },
    #[error("unknown item {0}")]
    UnknownItem(String),
    #[error("item {0} is already decided")]
    AlreadyDecided(String),
    #[error("invalid decision: {0}")]
    InvalidDecision(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("journal: {0}")]
    Journal(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl LoopError {
    pub fn tag(&self) -> &'static str {
        match self {
            LoopError::Validation(_) => "ValidationError",
            LoopError::LabelledPost => "LabelledPost",
            LoopError::PostIdConflict { .. } => "PostIdConflict",
            LoopError::UnknownItem(_) => "UnknownItem",
            LoopError::AlreadyDecided(_) => "AlreadyDecided",
            LoopError::InvalidDecision(_) => "InvalidDecision",
            LoopError::InvalidQuery(_) => "InvalidQuery",
            LoopError::Journal(_) => "JournalError",
            LoopError::Io(_) => "IoError",
        }
    }
}
