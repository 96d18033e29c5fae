use std::fmt;
use std::ops::AddAssign;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::evidence::StrategyId;
use super::post::{Label, ValidationError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReasoningMethod {
    #[serde(rename = "cot")]
    CoT,
    #[serde(rename = "ensemble")]
    Ensemble,
    #[serde(rename = "sc")]
    SelfConsistency,
    #[serde(rename = "multistep")]
    MultiStep,
}

impl ReasoningMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            ReasoningMethod::CoT => "cot",
            ReasoningMethod::Ensemble => "ensemble",
            ReasoningMethod::SelfConsistency => "sc",
            ReasoningMethod::MultiStep => "multistep",
        }
    }
}

impl fmt::Display for ReasoningMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReasoningMethod {
    type Err = ValidationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cot" => Ok(ReasoningMethod::CoT),
            "ensemble" => Ok(ReasoningMethod::Ensemble),
            "sc" | "self-consistency" | "self_consistency" => Ok(ReasoningMethod::SelfConsistency),
            "multistep" | "multi-step" => Ok(ReasoningMethod::MultiStep),
            _ => Err(ValidationError::BadEnum { field: "reasoning_method", value: s.to_string() }),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt: u64,
    pub completion: u64,
}

impl AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: TokenUsage) {
        self.prompt += rhs.prompt;
        self.completion += rhs.completion;
    }
}

/// Judgment produced from a single evidence group during multi-step reasoning.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Intermediate {
    pub strategy_id: StrategyId,
    /// `None` when the group call failed; `rationale` then holds the reason.
    pub label: Option<Label>,
    pub confidence: Option<u8>,
    pub rationale: String,
}

impl Intermediate {
    pub fn is_available(&self) -> bool {
        self.label.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub label: Label,
    pub confidence: u8,
    pub rationale: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intermediates: Option<Vec<Intermediate>>,
    pub reasoning_method: ReasoningMethod,
    pub model_id: String,
    pub token_usage: TokenUsage,
    #[serde(default)]
    pub retries: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl Verdict {
    pub fn check(&self) -> Result<(), ValidationError> {
        if self.confidence > 100 {
            return Err(ValidationError::BadEnum { field: "confidence", value: self.confidence.to_string() });
        }
        if self.intermediates.is_some() != (self.reasoning_method == ReasoningMethod::MultiStep) {
            return Err(ValidationError::BadEnum { field: "intermediates", value: self.reasoning_method.to_string() });
        }
        Ok(())
    }
}
