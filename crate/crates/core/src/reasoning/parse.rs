use std::sync::LazyLock;

use regex::Regex;
use serde_json::Value;

use crate::domain::Label;

use super::ReasoningError;

/// Confidence assumed when a reply gives none.
pub const DEFAULT_CONFIDENCE: u8 = 50;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedVerdict {
    pub label: Label,
    pub confidence: u8,
    pub rationale: String,
    /// Set when the reply carried no confidence and [`DEFAULT_CONFIDENCE`] was used.
    pub confidence_defaulted: bool,
}

static PIPE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?im)^\s*(real|fake)\s*\|\s*(-?\d+(?:\.\d+)?)\s*\|\s*(.*)$").unwrap());
static KV_LABEL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?im)^\s*\**\s*label\s*\**\s*[:=]\s*\**\s*(real|fake)\b").unwrap());
static KV_CONFIDENCE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?im)^\s*\**\s*confidence\s*\**\s*[:=]\s*(-?\d+(?:\.\d+)?)").unwrap());
static KV_RATIONALE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?ims)^\s*\**\s*rationale\s*\**\s*[:=]\s*(.+)$").unwrap());
static CONCLUSION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)\b(?:conclusion|verdict|final answer|answer|prediction|classification|judgement|judgment)\b\s*(?:is)?\s*[:\-]?\s*\**\s*(real|fake)\b",
    )
    .unwrap()
});
static LABEL_WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(real|fake)\b").unwrap());
static CONFIDENCE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\bconfidence(?:\s+(?:score|level))?\s*(?:is|of|:|=)?\s*(-?\d{1,3}(?:\.\d+)?)").unwrap()
});

fn clamp_confidence(x: f64) -> u8 {
    if x.is_nan() {
        return 0;
    }
    x.round().clamp(0.0, 100.0) as u8
}

fn number_of(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().trim_end_matches('%').parse().ok(),
        _ => None,
    }
}

fn from_json(raw: &str) -> Option<ParsedVerdict> {
    let mut found = None;
    for (i, _) in raw.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&raw[i..]).into_iter::<Value>();
        let Some(Ok(Value::Object(obj))) = stream.next() else { continue };
        let Some(label) = obj.get("label").and_then(Value::as_str).and_then(|l| l.parse::<Label>().ok()) else {
            continue;
        };
        let conf = obj.get("confidence").and_then(number_of);
        let rationale = obj.get("rationale").and_then(Value::as_str).unwrap_or_default().trim().to_string();
        found = Some(ParsedVerdict {
            label,
            confidence: conf.map(clamp_confidence).unwrap_or(DEFAULT_CONFIDENCE),
            rationale,
            confidence_defaulted: conf.is_none(),
        });
    }
    found
}

fn from_pipe(raw: &str) -> Option<ParsedVerdict> {
    let c = PIPE.captures_iter(raw).last()?;
    Some(ParsedVerdict {
        label: c[1].parse().ok()?,
        confidence: clamp_confidence(c[2].parse().ok()?),
        rationale: c[3].trim().to_string(),
        confidence_defaulted: false,
    })
}

fn from_key_values(raw: &str) -> Option<ParsedVerdict> {
    let label = KV_LABEL.captures_iter(raw).last()?[1].parse().ok()?;
    let conf = KV_CONFIDENCE.captures_iter(raw).last().and_then(|c| c[1].parse::<f64>().ok());
    let rationale = KV_RATIONALE.captures(raw).map(|c| c[1].trim().to_string()).unwrap_or_default();
    Some(ParsedVerdict {
        label,
        confidence: conf.map(clamp_confidence).unwrap_or(DEFAULT_CONFIDENCE),
        rationale,
        confidence_defaulted: conf.is_none(),
    })
}

fn from_free_text(raw: &str) -> Option<ParsedVerdict> {
    let label: Label = match CONCLUSION.captures_iter(raw).last() {
        Some(c) => c[1].parse().ok()?,
        None => {
            let mut words = LABEL_WORD.captures_iter(raw).filter_map(|c| c[1].parse::<Label>().ok());
            let first = words.next()?;
            if words.any(|w| w != first) {
                return None;
            }
            first
        }
    };
    let conf = CONFIDENCE.captures_iter(raw).last().and_then(|c| c[1].parse::<f64>().ok());
    Some(ParsedVerdict {
        label,
        confidence: conf.map(clamp_confidence).unwrap_or(DEFAULT_CONFIDENCE),
        rationale: String::new(),
        confidence_defaulted: conf.is_none(),
    })
}

/// Reads a label, confidence and rationale out of a model reply.
///
/// Structured forms come first: a JSON object with a `label` key, a
/// `label|confidence|rationale` line, or `label:`/`confidence:`/`rationale:`
/// lines. Otherwise the reply is scanned for a conclusion marker
/// ("Conclusion: Real") or, failing that, a single unambiguous label word.
/// Confidence is clamped to 0..=100. An empty rationale is replaced by the
/// whole reply.
pub fn parse_verdict(raw: &str) -> Result<ParsedVerdict, ReasoningError> {
    let mut parsed = from_json(raw)
        .or_else(|| from_pipe(raw))
        .or_else(|| from_key_values(raw))
        .or_else(|| from_free_text(raw))
        .ok_or_else(|| ReasoningError::Unparseable { raw: raw.chars().take(500).collect() })?;
    if parsed.rationale.is_empty() {
        parsed.rationale = raw.trim().to_string();
    }
    Ok(parsed)
}
