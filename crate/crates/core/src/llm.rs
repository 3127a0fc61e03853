//! The text-generation seam between the algorithms and whatever serves them.

use alloc::string::String;
use core::fmt;

use serde::{Deserialize, Serialize};

/// Sampling temperature for every generation stage.
pub const GENERATION_TEMPERATURE: f64 = 0.8;
/// Sampling temperature for explanation judging.
pub const JUDGE_TEMPERATURE: f64 = 0.0;

/// Accounting bucket a model call is charged to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    ClaimDecomposition,
    EdgeGeneration,
    ExplanationGeneration,
    FinalExplanationGeneration,
    Inference,
    Judge,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::ClaimDecomposition,
        Stage::EdgeGeneration,
        Stage::ExplanationGeneration,
        Stage::FinalExplanationGeneration,
        Stage::Inference,
        Stage::Judge,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::ClaimDecomposition => "claim_decomposition",
            Stage::EdgeGeneration => "edge_generation",
            Stage::ExplanationGeneration => "explanation_generation",
            Stage::FinalExplanationGeneration => "final_explanation_generation",
            Stage::Inference => "inference",
            Stage::Judge => "judge",
        }
    }

    /// Row title in cost tables.
    pub fn title(self) -> &'static str {
        match self {
            Stage::ClaimDecomposition => "claim decomposition",
            Stage::EdgeGeneration => "edge generation",
            Stage::ExplanationGeneration => "explanation generation",
            Stage::FinalExplanationGeneration => "final explanation generation",
            Stage::Inference => "inference",
            Stage::Judge => "judge",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LlmError {
    /// The provider could not be reached after all retries.
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    /// The provider answered with something unusable (bad status, no fixture).
    #[error("provider error: {0}")]
    Provider(String),
}

/// Anything that turns a prompt into text.
///
/// Implementations record token usage against `stage`; callers only see text.
pub trait Generator {
    fn generate(&self, stage: Stage, prompt: &str, temperature: f64) -> Result<String, LlmError>;
}

impl<G: Generator + ?Sized> Generator for &G {
    fn generate(&self, stage: Stage, prompt: &str, temperature: f64) -> Result<String, LlmError> {
        (**self).generate(stage, prompt, temperature)
    }
}
