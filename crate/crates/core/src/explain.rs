//! Veracity-oriented explanations over retrieved evidence.

use alloc::string::String;

use serde::{Deserialize, Serialize};

use crate::llm::{Generator, LlmError, Stage, GENERATION_TEMPERATURE};
use crate::prompt::{render_prompt, TemplateId};
use crate::retrieval::EvidenceSet;

/// The binary assumption an explanation is argued from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorLabel {
    False,
    True,
}

impl PriorLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            PriorLabel::False => "false",
            PriorLabel::True => "true",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    FalseOriented,
    TrueOriented,
    /// Stance-free analysis produced when only one explanation is requested.
    Analysis,
}

impl Orientation {
    pub fn for_verdict(verdict: bool) -> Self {
        if verdict {
            Orientation::TrueOriented
        } else {
            Orientation::FalseOriented
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExplainError {
    #[error("empty explanation for node {0} after retry")]
    Empty(usize),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExplanationTexts {
    Competing { false_oriented: String, true_oriented: String },
    Single { analysis: String },
}

/// Explanations attached to one graph node, with the evidence they were
/// generated from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompetingExplanations {
    pub sub_claim_index: usize,
    pub texts: ExplanationTexts,
    pub evidence: EvidenceSet,
    pub background: Option<String>,
}

impl CompetingExplanations {
    pub fn get(&self, orientation: Orientation) -> Option<&str> {
        match (&self.texts, orientation) {
            (ExplanationTexts::Competing { false_oriented, .. }, Orientation::FalseOriented) => Some(false_oriented),
            (ExplanationTexts::Competing { true_oriented, .. }, Orientation::TrueOriented) => Some(true_oriented),
            (ExplanationTexts::Single { analysis }, Orientation::Analysis) => Some(analysis),
            _ => None,
        }
    }

    pub fn is_competing(&self) -> bool {
        matches!(self.texts, ExplanationTexts::Competing { .. })
    }

    pub fn count(&self) -> usize {
        if self.is_competing() {
            2
        } else {
            1
        }
    }
}

fn generate_nonempty<G: Generator>(generator: &G, unit: usize, prompt: &str) -> Result<String, ExplainError> {
    for _ in 0..2 {
        let reply = generator.generate(Stage::ExplanationGeneration, prompt, GENERATION_TEMPERATURE)?;
        let trimmed = reply.trim();
        if !trimmed.is_empty() {
            return Ok(String::from(trimmed));
        }
    }
    Err(ExplainError::Empty(unit))
}

pub fn explanation_prompt(text: &str, evidence: &EvidenceSet, prior: PriorLabel) -> String {
    let joined = evidence.joined();
    render_prompt(TemplateId::Rationale, &[("claim", text), ("label", prior.as_str()), ("evidence", &joined)])
        .expect("rationale slots")
}

/// Argue `text` towards `prior` from the evidence. An empty evidence set
/// leaves the evidence section empty.
pub fn generate_explanation<G: Generator>(
    generator: &G,
    unit: usize,
    text: &str,
    evidence: &EvidenceSet,
    prior: PriorLabel,
) -> Result<String, ExplainError> {
    generate_nonempty(generator, unit, &explanation_prompt(text, evidence, prior))
}

/// False-oriented then true-oriented explanation from the same evidence.
pub fn generate_competing_pair<G: Generator>(
    generator: &G,
    unit: usize,
    text: &str,
    evidence: EvidenceSet,
) -> Result<CompetingExplanations, ExplainError> {
    let false_oriented = generate_explanation(generator, unit, text, &evidence, PriorLabel::False)?;
    let true_oriented = generate_explanation(generator, unit, text, &evidence, PriorLabel::True)?;
    Ok(CompetingExplanations {
        sub_claim_index: unit,
        texts: ExplanationTexts::Competing { false_oriented, true_oriented },
        evidence,
        background: None,
    })
}

/// One explanation without a prior label.
pub fn generate_single_analysis<G: Generator>(
    generator: &G,
    unit: usize,
    text: &str,
    evidence: EvidenceSet,
) -> Result<CompetingExplanations, ExplainError> {
    let joined = evidence.joined();
    let prompt = render_prompt(TemplateId::RationaleSingle, &[("claim", text), ("evidence", &joined)])
        .expect("single rationale slots");
    let analysis = generate_nonempty(generator, unit, &prompt)?;
    Ok(CompetingExplanations {
        sub_claim_index: unit,
        texts: ExplanationTexts::Single { analysis },
        evidence,
        background: None,
    })
}

/// Stance-free context for `text` from a wider evidence set.
pub fn generate_background<G: Generator>(
    generator: &G,
    unit: usize,
    text: &str,
    related: &EvidenceSet,
) -> Result<String, ExplainError> {
    let joined = related.joined();
    let prompt =
        render_prompt(TemplateId::Background, &[("claim", text), ("reports", &joined)]).expect("background slots");
    generate_nonempty(generator, unit, &prompt)
}
