//! Shared data types for posts, evidence and verdicts.
//!
//! Everything here is immutable once constructed. Construction goes through
//! [`validate_post`] (for posts) or the `EvidenceItem` constructors, which
//! enforce the invariants the rest of the pipeline relies on.

mod evidence;
mod hostname;
mod post;
mod verdict;

pub(crate) use evidence::recompact;
pub use evidence::{EvidenceBundle, EvidenceItem, EvidenceKind, Provenance, StrategyId};
pub use hostname::registrable_domain;
pub use post::{
    validate_post, ContentHash, FlaggingRef, ImageRef, IngestContext, Label, MisinfoType, Post, RawImage, RawPost,
    Topic, ValidationError,
};
pub use verdict::{Intermediate, ReasoningMethod, TokenUsage, Verdict};
