//! Deterministic stand-ins for the external services.
//!
//! [`RuleJudge`] answers every prompt the pipeline sends with a fixed rule:
//! a post is fake when its retrieved evidence contains one of
//! [`FAKE_MARKERS`], real otherwise. [`gateway`] wraps it, together with a
//! scripted search index, in a [`Transport`] that speaks the search-gateway
//! and chat-completions wire formats, so fixtures can be recorded through
//! the real HTTP clients.

use std::collections::BTreeMap;
use std::sync::{Arc, LazyLock};

use regex::Regex;
use serde_json::{json, Value};

use crate::backends::{
    BackendError, Completion, FnTransport, HttpRequest, HttpResponse, LlmBackend, LlmRequest, Transport,
};
use crate::domain::TokenUsage;
use crate::postprocess::evidence_body_of_prompt;

/// Evidence phrases that make [`RuleJudge`] call a post fake.
pub const FAKE_MARKERS: &[&str] = &["different event", "digitally altered", "ai-generated", "fabricated", "debunked"];

/// Confidence of the no-evidence answer.
pub const BASELINE_CONFIDENCE: u8 = 60;

static N_QUERIES: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"Write (\d+) web search queries").unwrap());
static INTERMEDIATE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"label: (real|fake); confidence: (\d+)").unwrap());
static MEMBER_LABEL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#""label": "(real|fake)""#).unwrap());

fn answer(label: &str, confidence: u8, rationale: &str) -> String {
    format!("Checked the material.\n{}", json!({ "label": label, "confidence": confidence, "rationale": rationale }))
}

/// Lines of every `### Evidence group` block, up to the blank line ending it.
fn evidence_text(prompt: &str) -> Option<String> {
    let mut out = String::new();
    let mut inside = false;
    let mut any = false;
    for line in prompt.lines() {
        if line.starts_with("### Evidence group") {
            inside = true;
            any = true;
            continue;
        }
        if inside {
            if line.trim().is_empty() {
                inside = false;
            } else {
                out.push_str(line);
                out.push('\n');
            }
        }
    }
    any.then_some(out)
}

fn between<'a>(prompt: &'a str, start: &str) -> &'a str {
    prompt.split_once(start).map_or("", |(_, rest)| rest)
}

/// The reply [`RuleJudge`] gives to `prompt` (the concatenated user text).
pub fn judge_reply(prompt: &str) -> String {
    if let Some(c) = N_QUERIES.captures(prompt) {
        let n: usize = c[1].parse().unwrap_or(1);
        let claim = between(prompt, "Post text:\n").lines().next().unwrap_or("").trim();
        let head: String = claim.split_whitespace().take(6).collect::<Vec<_>>().join(" ");
        let angles = ["original source", "photo origin", "date and place", "official statement", "fact check"];
        return (0..n).map(|i| format!("{head} {}", angles[i % angles.len()])).collect::<Vec<_>>().join("\n");
    }
    if let Some(body) = evidence_body_of_prompt(prompt) {
        return body.to_string();
    }
    if prompt.contains("Judgments per evidence type:") {
        let section = between(prompt, "Judgments per evidence type:");
        let judged: Vec<(String, u8)> =
            INTERMEDIATE.captures_iter(section).map(|c| (c[1].to_string(), c[2].parse().unwrap_or(50))).collect();
        return match judged.iter().filter(|(l, _)| l == "fake").map(|(_, c)| *c).max() {
            Some(c) => answer("fake", c, "One evidence type shows the post misrepresents its image or claim."),
            None if judged.is_empty() => answer("real", 50, "No usable judgments."),
            None => answer("real", 70, "Every evidence type is consistent with the post."),
        };
    }
    if prompt.contains("Assessments:\n") {
        let section = between(prompt, "Assessments:\n");
        let fake = MEMBER_LABEL.captures_iter(section).filter(|c| &c[1] == "fake").count();
        let real = MEMBER_LABEL.captures_iter(section).filter(|c| &c[1] == "real").count();
        return if fake > real {
            answer("fake", 80, "Most assessments find the post fake.")
        } else {
            answer("real", 70, "Most assessments find the post real.")
        };
    }
    if prompt.contains("previous answer could not be read") {
        return answer("real", 50, "Re-asked.");
    }
    match evidence_text(prompt) {
        None => answer("real", BASELINE_CONFIDENCE, "No evidence; the post looks plausible on its face."),
        Some(ev) => {
            let lower = ev.to_lowercase();
            match FAKE_MARKERS.iter().find(|m| lower.contains(*m)) {
                Some(m) => answer("fake", 85, &format!("The evidence says the image or claim is {m}.")),
                None => answer("real", 70, "The evidence is consistent with the post."),
            }
        }
    }
}

/// An [`LlmBackend`] answering with [`judge_reply`].
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleJudge;

impl LlmBackend for RuleJudge {
    fn complete(&self, req: &LlmRequest) -> Result<Completion, BackendError> {
        req.validate()?;
        let text = judge_reply(&req.user_text());
        let usage = TokenUsage { prompt: req.estimated_tokens(), completion: (text.len() as u64).div_ceil(4) };
        Ok(Completion { text, usage })
    }
}

/// One scripted search result in gateway JSON form.
pub fn hit(url: &str, title: &str, snippet: &str) -> Value {
    json!({ "url": url, "title": title, "snippet": snippet })
}

/// Search results keyed by `(op, q)`; unknown queries return no results.
pub type SearchIndex = BTreeMap<(String, String), Vec<Value>>;

fn respond(status: u16, body: Value) -> HttpResponse {
    HttpResponse { status, body: body.to_string().into_bytes() }
}

fn chat_text(body: &Value) -> String {
    let mut parts = Vec::new();
    for m in body["messages"].as_array().into_iter().flatten() {
        if m["role"] != "user" {
            continue;
        }
        match &m["content"] {
            Value::String(s) => parts.push(s.clone()),
            Value::Array(items) => {
                for it in items {
                    if let Some(t) = it["text"].as_str() {
                        parts.push(t.to_string());
                    }
                }
            }
            _ => {}
        }
    }
    parts.join("\n")
}

/// A transport emulating the search gateway (`/search`) over `index` and an
/// OpenAI-compatible `/chat/completions` driven by [`judge_reply`].
pub fn gateway(index: SearchIndex) -> Arc<dyn Transport> {
    Arc::new(FnTransport(move |req: &HttpRequest| {
        let body: Value = serde_json::from_slice(req.body.as_deref().unwrap_or(b"{}"))
            .map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
        if req.url.ends_with("/search") {
            let op = body["op"].as_str().unwrap_or_default().to_string();
            let q = body["q"].as_str().unwrap_or_default().to_string();
            let num = body["num"].as_u64().unwrap_or(10) as usize;
            let results: Vec<Value> = index.get(&(op, q)).cloned().unwrap_or_default().into_iter().take(num).collect();
            return Ok(respond(200, json!({ "results": results })));
        }
        if req.url.ends_with("/chat/completions") {
            let text = judge_reply(&chat_text(&body));
            return Ok(respond(200, json!({ "choices": [{ "message": { "role": "assistant", "content": text } }] })));
        }
        Ok(respond(404, json!({ "error": "not found" })))
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn judge_rules() {
        assert!(judge_reply("Post text:\nx\n\nRetrieved evidence:\nNo external evidence is available.")
            .contains("\"real\""));
        let ev = "### Evidence group 3: I->Et (A) (x)\n[1] t | a.com | undated\nThe photo originates from a different event.\n\nThink";
        assert!(judge_reply(ev).contains("\"fake\""));
        let agg = "Judgments per evidence type:\n### g\nlabel: real; confidence: 70; rationale: a\n\n### h\nlabel: fake; confidence: 85; rationale: b";
        assert!(judge_reply(agg).contains("\"fake\""));
        assert_eq!(judge_reply("Post text:\nA b c\n\nWrite 2 web search queries").lines().count(), 2);
    }
}
