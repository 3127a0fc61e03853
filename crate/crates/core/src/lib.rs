//! Core of the G-Defense fact verification pipeline.
//!
//! Everything here is allocation-only (`no_std` + `alloc`): label arithmetic,
//! the prompt registry, claim-graph construction, evidence ranking, graph
//! serialization, competing-explanation and inference orchestration over
//! abstract provider traits, explanation-graph filtering, metrics and cost
//! arithmetic. IO, HTTP, caching and the CLI live in the `gdefense` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod cost;
pub mod explain;
pub mod graph;
pub mod inference;
pub mod label;
pub mod llm;
pub mod metrics;
pub mod prompt;
pub mod pyliteral;
pub mod record;
pub mod retrieval;
pub mod summary;

pub use cost::{Cost, LatencyProfile, Pricing, TokenLedger, TokenUsage};
pub use explain::{CompetingExplanations, Orientation, PriorLabel};
pub use graph::{ClaimCenteredGraph, EdgeProvenance, HyperGraph};
pub use inference::{DefenseGraph, PredictionResult, PredictionSource, SerializedGraph};
pub use label::{LabelError, VeracityLabel, VeracityScheme};
pub use llm::{Generator, LlmError, Stage};
pub use metrics::{ConfusionMatrix, JudgeScores, MacroMetrics};
pub use prompt::{PromptError, TemplateId};
pub use record::{ClaimRecord, Report};
pub use retrieval::{Embedder, EvidenceCandidate, EvidenceSet, HashingEmbedder};
pub use summary::{ExplanationGraph, SubClaimVerdict};
