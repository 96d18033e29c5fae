use std::path::Path;

use crate::domain::{EvidenceBundle, EvidenceItem, Post, StrategyId};
use crate::retrieval::describe_images;

use super::ReasoningError;

pub const OUTPUT_FORMAT: &str = include_str!("../../prompts/output_format.v1.txt");
pub const STRICT_REASK: &str = include_str!("../../prompts/strict_reask.v1.txt");
pub const ENSEMBLE_AGGREGATE: &str = include_str!("../../prompts/ensemble_aggregate.v1.txt");
pub const MULTISTEP_AGGREGATE: &str = include_str!("../../prompts/multistep_aggregate.v1.txt");

const COT: &str = include_str!("../../prompts/cot.v1.txt");
const ENSEMBLE_SKEPTIC: &str = include_str!("../../prompts/ensemble_skeptic.v1.txt");
const ENSEMBLE_EVIDENCE_FIRST: &str = include_str!("../../prompts/ensemble_evidence_first.v1.txt");
const ENSEMBLE_IMAGE_FOCUS: &str = include_str!("../../prompts/ensemble_image_focus.v1.txt");

const PLACEHOLDERS: [&str; 3] = ["{claim}", "{evidence}", "{images}"];

/// A judging prompt. The shared output clause is appended to every rendered
/// user message so a single parser handles all replies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: String,
    pub system_text: String,
    pub user_template: String,
}

impl PromptTemplate {
    pub fn new(
        name: impl Into<String>,
        system_text: impl Into<String>,
        user_template: impl Into<String>,
    ) -> Result<Self, ReasoningError> {
        let t =
            PromptTemplate { name: name.into(), system_text: system_text.into(), user_template: user_template.into() };
        for p in PLACEHOLDERS {
            let n = t.user_template.matches(p).count();
            if n != 1 {
                return Err(ReasoningError::InvalidInput(format!(
                    "template {}: placeholder {p} appears {n} times",
                    t.name
                )));
            }
        }
        Ok(t)
    }

    /// Parses the template file format: optional leading `#` comment lines,
    /// then a `[system]` section and a `[user]` section.
    pub fn parse(name: impl Into<String>, text: &str) -> Result<Self, ReasoningError> {
        let name = name.into();
        let body: String = text.lines().skip_while(|l| l.starts_with('#')).collect::<Vec<_>>().join("\n");
        let bad = |why: &str| ReasoningError::InvalidInput(format!("template {name}: {why}"));
        let rest = body.trim_start().strip_prefix("[system]").ok_or_else(|| bad("missing [system] section"))?;
        let (system, user) = rest.split_once("\n[user]").ok_or_else(|| bad("missing [user] section"))?;
        PromptTemplate::new(name.clone(), system.trim(), user.trim())
    }

    pub fn load(path: &Path) -> Result<Self, ReasoningError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ReasoningError::InvalidInput(format!("{}: {e}", path.display())))?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("template").to_string();
        PromptTemplate::parse(name, &text)
    }

    pub fn render(&self, claim: &str, evidence: &str, images: &str) -> String {
        // Single pass so placeholder-like text inside the claim or evidence
        // is never substituted.
        let mut out = String::with_capacity(self.user_template.len() + claim.len() + evidence.len());
        let mut rest = self.user_template.as_str();
        while let Some(start) = rest.find('{') {
            out.push_str(&rest[..start]);
            let tail = &rest[start..];
            let (value, len) = if tail.starts_with("{claim}") {
                (claim, 7)
            } else if tail.starts_with("{evidence}") {
                (evidence, 10)
            } else if tail.starts_with("{images}") {
                (images, 8)
            } else {
                ("{", 1)
            };
            out.push_str(value);
            rest = &tail[len..];
        }
        out.push_str(rest);
        out.push_str("\n\n");
        out.push_str(OUTPUT_FORMAT.trim_end());
        out
    }
}

pub fn cot_template() -> PromptTemplate {
    PromptTemplate::parse("cot.v1", COT).expect("bundled template is valid")
}

/// The bundled ensemble variants, in a fixed order.
pub fn ensemble_templates() -> Vec<PromptTemplate> {
    vec![
        PromptTemplate::parse("ensemble_skeptic.v1", ENSEMBLE_SKEPTIC).expect("bundled template is valid"),
        PromptTemplate::parse("ensemble_evidence_first.v1", ENSEMBLE_EVIDENCE_FIRST)
            .expect("bundled template is valid"),
        PromptTemplate::parse("ensemble_image_focus.v1", ENSEMBLE_IMAGE_FOCUS).expect("bundled template is valid"),
    ]
}

fn render_item(out: &mut String, item: &EvidenceItem) {
    let date = item.published_date.map(|d| d.to_string()).unwrap_or_else(|| "undated".into());
    out.push_str(&format!("[{}] {} | {} | {}\n", item.rank, item.title.trim(), item.domain, date));
    let body = item.body.trim();
    if !body.is_empty() {
        out.push_str(body);
        out.push('\n');
    }
}

pub fn group_header(sid: StrategyId) -> String {
    format!("### Evidence group {sid}: {} ({})", sid.alias(), sid.describe())
}

/// Renders evidence group by group in ascending strategy id, items by rank.
pub fn serialize_evidence(bundle: &EvidenceBundle) -> String {
    if bundle.groups.is_empty() {
        return "No external evidence is available. Judge from the post alone.".into();
    }
    let mut out = String::new();
    for (sid, items) in &bundle.groups {
        serialize_group_into(&mut out, *sid, items);
    }
    out.trim_end().to_string()
}

pub fn serialize_group(sid: StrategyId, items: &[EvidenceItem]) -> String {
    let mut out = String::new();
    serialize_group_into(&mut out, sid, items);
    out.trim_end().to_string()
}

fn serialize_group_into(out: &mut String, sid: StrategyId, items: &[EvidenceItem]) {
    out.push_str(&group_header(sid));
    out.push('\n');
    if items.is_empty() {
        out.push_str("(no evidence retrieved)\n");
    }
    let mut sorted: Vec<&EvidenceItem> = items.iter().collect();
    sorted.sort_by_key(|i| i.rank);
    for item in sorted {
        render_item(out, item);
    }
    out.push('\n');
}

pub fn images_block(post: &Post) -> String {
    describe_images(post)
}
