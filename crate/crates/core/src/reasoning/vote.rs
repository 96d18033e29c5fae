use crate::domain::{Label, ReasoningMethod, TokenUsage, Verdict};

const MAX_RATIONALE_CHARS: usize = 2000;

/// Verdicts from repeated sampling of one post. Never empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteSet(Vec<Verdict>);

impl VoteSet {
    pub fn new(votes: Vec<Verdict>) -> Option<Self> {
        if votes.is_empty() {
            None
        } else {
            Some(VoteSet(votes))
        }
    }

    pub fn votes(&self) -> &[Verdict] {
        &self.0
    }
}

/// Majority label over the votes.
///
/// Ties go to the label with the higher mean confidence; if the means are
/// equal too, the result is `Fake`. The output confidence is the rounded
/// mean confidence of the winning votes. The result does not depend on the
/// order of the votes.
///
/// The returned verdict is tagged [`ReasoningMethod::SelfConsistency`];
/// callers using the vote as a fallback retag it.
pub fn majority_vote(votes: &VoteSet) -> Verdict {
    let votes = votes.votes();
    let of = |l: Label| votes.iter().filter(|v| v.label == l).collect::<Vec<_>>();
    let (real, fake) = (of(Label::Real), of(Label::Fake));
    let sum = |vs: &[&Verdict]| vs.iter().map(|v| v.confidence as u64).sum::<u64>();

    let winner = if real.len() != fake.len() {
        if real.len() > fake.len() {
            Label::Real
        } else {
            Label::Fake
        }
    } else if sum(&real) > sum(&fake) {
        // Equal counts, so comparing sums compares means.
        Label::Real
    } else {
        Label::Fake
    };
    let winning = if winner == Label::Real { &real } else { &fake };
    let n = winning.len() as u64;
    let confidence = ((2 * sum(winning) + n) / (2 * n)) as u8;

    let mut reasons: Vec<(u8, &str)> = winning.iter().map(|v| (v.confidence, v.rationale.as_str())).collect();
    reasons.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(b.1)));
    let mut rationale = reasons.iter().map(|(_, r)| *r).collect::<Vec<_>>().join(" | ");
    if let Some((idx, _)) = rationale.char_indices().nth(MAX_RATIONALE_CHARS) {
        rationale.truncate(idx);
    }
    if rationale.trim().is_empty() {
        rationale = format!("{} of {} samples voted {}", winning.len(), votes.len(), winner);
    }

    let mut token_usage = TokenUsage::default();
    for v in votes {
        token_usage += v.token_usage;
    }
    let mut warnings: Vec<String> = votes.iter().flat_map(|v| v.warnings.iter().cloned()).collect();
    warnings.sort();
    warnings.dedup();

    Verdict {
        label: winner,
        confidence,
        rationale,
        intermediates: None,
        reasoning_method: ReasoningMethod::SelfConsistency,
        model_id: votes.iter().map(|v| v.model_id.as_str()).min().unwrap_or_default().to_string(),
        token_usage,
        retries: votes.iter().map(|v| v.retries).sum(),
        warnings,
    }
}
