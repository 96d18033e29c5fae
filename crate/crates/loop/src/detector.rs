use mmfc_core::domain::{Post, Verdict};
use mmfc_core::pipeline::Pipeline;

use crate::item::EvidenceDigest;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectFailure {
    pub tag: String,
    pub message: String,
}

/// Produces a preliminary assessment for one post.
pub trait Detector: Send + Sync {
    /// Items already assessed under the same fingerprint are skipped.
    fn fingerprint(&self) -> String;
    fn assess(&self, post: &Post) -> Result<(Verdict, EvidenceDigest), DetectFailure>;
}

impl Detector for Pipeline {
    fn fingerprint(&self) -> String {
        self.config().fingerprint().digest
    }

    fn assess(&self, post: &Post) -> Result<(Verdict, EvidenceDigest), DetectFailure> {
        let d = self.detect(post).map_err(|e| DetectFailure { tag: e.tag().into(), message: e.to_string() })?;
        Ok((d.verdict, EvidenceDigest::from_bundle(&d.bundle)))
    }
}

/// A detector backed by a closure.
pub struct FnDetector<F> {
    fingerprint: String,
    f: F,
}

impl<F> FnDetector<F>
where
    F: Fn(&Post) -> Result<(Verdict, EvidenceDigest), DetectFailure> + Send + Sync,
{
    pub fn new(fingerprint: impl Into<String>, f: F) -> Self {
        FnDetector { fingerprint: fingerprint.into(), f }
    }
}

impl<F> Detector for FnDetector<F>
where
    F: Fn(&Post) -> Result<(Verdict, EvidenceDigest), DetectFailure> + Send + Sync,
{
    fn fingerprint(&self) -> String {
        self.fingerprint.clone()
    }

    fn assess(&self, post: &Post) -> Result<(Verdict, EvidenceDigest), DetectFailure> {
        (self.f)(post)
    }
}
