//! Final summarization, verdict-consistent explanation filtering and exports.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::explain::Orientation;
use crate::graph::{ClaimCenteredGraph, Edge};
use crate::inference::{build_inference_prompt, graph_section, DefenseGraph};
use crate::label::VeracityLabel;
use crate::llm::{Generator, LlmError, Stage, GENERATION_TEMPERATURE};
use crate::prompt::{render_prompt, TemplateId};
use crate::pyliteral::{find_dict, find_key, Value};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SummaryError {
    #[error("summary reply has no final explanation after retry")]
    Unparseable,
    #[error("verdict for unknown node {0}")]
    UnknownIndex(usize),
    #[error("no verdict for node {0}")]
    MissingVerdict(usize),
    #[error("more than one verdict for node {0}")]
    DuplicateVerdict(usize),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubClaimVerdict {
    pub sub_claim_index: usize,
    pub reasoning: String,
    /// `true` when the sub-claim is judged true.
    pub prediction: bool,
    /// Set when the model gave no verdict and one was derived from the claim label.
    #[serde(default)]
    pub fallback: bool,
}

/// Entries read from one summarization reply.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedSummary {
    pub verdicts: BTreeMap<usize, (String, bool)>,
    pub final_explanation: Option<String>,
}

fn trailing_number(key: &str) -> Option<usize> {
    let digits: String = key.trim().chars().rev().take_while(char::is_ascii_digit).collect();
    if digits.is_empty() {
        return None;
    }
    digits.chars().rev().collect::<String>().parse().ok()
}

fn read_bool(v: &Value) -> Option<bool> {
    match v {
        Value::Bool(b) => Some(*b),
        Value::Str(s) => {
            let t = s.trim().trim_end_matches('.').to_ascii_lowercase();
            match t.as_str() {
                "true" => Some(true),
                "false" => Some(false),
                _ => None,
            }
        }
        _ => None,
    }
}

fn lookup(dict: Option<&Value>, text: &str, key: &str) -> Option<Value> {
    dict.and_then(|d| d.get(key).cloned()).or_else(|| find_key(text, key))
}

pub fn parse_summary_response(text: &str) -> ParsedSummary {
    let dict = find_dict(text);
    let mut out = ParsedSummary::default();
    if let Some(Value::Dict(entries)) = lookup(dict.as_ref(), text, "sub-claims-veracity") {
        for (k, v) in &entries {
            let Some(index) = k.as_str().and_then(trailing_number) else { continue };
            let Some(prediction) = v.get("prediction").and_then(read_bool) else { continue };
            let reasoning = v.get("reasoning").and_then(Value::as_str).unwrap_or("");
            out.verdicts.entry(index).or_insert((String::from(reasoning.trim()), prediction));
        }
    }
    out.final_explanation = lookup(dict.as_ref(), text, "final-explanation")
        .and_then(|v| v.as_str().map(|s| String::from(s.trim())))
        .filter(|s| !s.is_empty());
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SummaryOutcome {
    pub verdicts: Vec<SubClaimVerdict>,
    pub summary: String,
}

pub fn summary_prompt(graph: &DefenseGraph, label: VeracityLabel, structure: Option<&str>) -> String {
    let inference = build_inference_prompt(graph, label.scheme(), structure);
    render_prompt(TemplateId::Summarize, &[("label", label.name()), ("graph", graph_section(&inference))])
        .expect("summary slots")
}

/// Ask for per-sub-claim verdicts and the final explanation. A reply missing
/// either earns one re-prompt; sub-claims still missing afterwards get the
/// verdict that agrees with `label`, flagged as a fallback.
pub fn summarize<G: Generator>(
    generator: &G,
    graph: &DefenseGraph,
    label: VeracityLabel,
    structure: Option<&str>,
) -> Result<SummaryOutcome, SummaryError> {
    let prompt = summary_prompt(graph, label, structure);
    let wanted: Vec<usize> = graph.base.sub_claims.iter().enumerate().map(|(i, _)| i + 1).collect();
    let mut verdicts: BTreeMap<usize, (String, bool)> = BTreeMap::new();
    let mut summary = None;
    for _ in 0..2 {
        let reply = generator.generate(Stage::FinalExplanationGeneration, &prompt, GENERATION_TEMPERATURE)?;
        let parsed = parse_summary_response(&reply);
        for (i, v) in parsed.verdicts {
            if wanted.contains(&i) {
                verdicts.entry(i).or_insert(v);
            }
        }
        if parsed.final_explanation.is_some() {
            summary = parsed.final_explanation;
        }
        if summary.is_some() && wanted.iter().all(|i| verdicts.contains_key(i)) {
            break;
        }
    }
    let summary = summary.ok_or(SummaryError::Unparseable)?;
    let verdicts = graph
        .base
        .units()
        .into_iter()
        .map(|i| match verdicts.remove(&i) {
            Some((reasoning, prediction)) => {
                SubClaimVerdict { sub_claim_index: i, reasoning, prediction, fallback: false }
            }
            None => SubClaimVerdict {
                sub_claim_index: i,
                reasoning: String::new(),
                prediction: label.leans_true(),
                fallback: true,
            },
        })
        .collect();
    Ok(SummaryOutcome { verdicts, summary })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeptExplanation {
    pub orientation: Orientation,
    pub text: String,
}

/// The claim graph with one verdict-consistent explanation per unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExplanationGraph {
    pub base: ClaimCenteredGraph,
    pub claim_label: VeracityLabel,
    pub verdicts: Vec<SubClaimVerdict>,
    pub kept: BTreeMap<usize, KeptExplanation>,
    pub summary: String,
}

/// Keep the true-oriented explanation of each unit judged true and the
/// false-oriented one otherwise. Units with a single explanation keep it.
pub fn build_explanation_graph(
    graph: &DefenseGraph,
    verdicts: Vec<SubClaimVerdict>,
    summary: String,
    label: VeracityLabel,
) -> Result<ExplanationGraph, SummaryError> {
    let units = graph.base.units();
    let mut by_index: BTreeMap<usize, SubClaimVerdict> = BTreeMap::new();
    for v in verdicts {
        let i = v.sub_claim_index;
        if !units.contains(&i) {
            return Err(SummaryError::UnknownIndex(i));
        }
        if by_index.insert(i, v).is_some() {
            return Err(SummaryError::DuplicateVerdict(i));
        }
    }
    let mut kept = BTreeMap::new();
    for &i in &units {
        let verdict = by_index.get(&i).ok_or(SummaryError::MissingVerdict(i))?;
        let explanations = graph.explanations.get(&i).ok_or(SummaryError::MissingVerdict(i))?;
        let orientation = if explanations.is_competing() {
            Orientation::for_verdict(verdict.prediction)
        } else {
            Orientation::Analysis
        };
        let text = explanations.get(orientation).map(String::from).unwrap_or_default();
        kept.insert(i, KeptExplanation { orientation, text });
    }
    Ok(ExplanationGraph {
        base: graph.base.clone(),
        claim_label: label,
        verdicts: by_index.into_values().collect(),
        kept,
        summary,
    })
}

impl ExplanationGraph {
    pub fn verdict(&self, index: usize) -> Option<&SubClaimVerdict> {
        self.verdicts.iter().find(|v| v.sub_claim_index == index)
    }

    /// Graph serialization plus the text of every node, for judging.
    pub fn judge_text(&self) -> String {
        let mut out = crate::inference::graph_to_seq(&self.base).text;
        let _ = write!(out, "\nNode 0 (claim): {}", self.base.claim);
        if let Some(k) = self.kept.get(&0) {
            let _ = write!(out, "\nExplanation: {}", k.text);
        }
        for (i, sub) in self.base.sub_claims.iter().enumerate() {
            let _ = write!(out, "\nNode {} (Sub-claim {}): {sub}", i + 1, i + 1);
            if let Some(k) = self.kept.get(&(i + 1)) {
                let _ = write!(out, "\nExplanation: {}", k.text);
            }
        }
        let _ = write!(out, "\nSummary: {}", self.summary);
        out
    }
}

fn dot_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => {}
            c => out.push(c),
        }
    }
    out
}

fn orientation_name(o: Orientation) -> &'static str {
    match o {
        Orientation::FalseOriented => "false-oriented",
        Orientation::TrueOriented => "true-oriented",
        Orientation::Analysis => "analysis",
    }
}

/// Graphviz rendering: `n0` is the claim, `n1..` the sub-claims and `x<i>` the
/// explanation kept for node `i`.
pub fn export_dot(g: &ExplanationGraph) -> String {
    let mut out = String::from("digraph explanation {\n  rankdir=BT;\n  node [shape=box];\n");
    let _ = writeln!(
        out,
        "  n0 [label=\"{}\\nlabel: {}\", style=bold];",
        dot_escape(&g.base.claim),
        g.claim_label.name()
    );
    for (i, sub) in g.base.sub_claims.iter().enumerate() {
        let idx = i + 1;
        let verdict = match g.verdict(idx) {
            Some(v) if v.prediction => "true",
            Some(_) => "false",
            None => "unknown",
        };
        let _ = writeln!(out, "  n{idx} [label=\"{idx}. {}\\nverdict: {verdict}\"];", dot_escape(sub));
    }
    for (i, k) in &g.kept {
        let _ = writeln!(
            out,
            "  x{i} [shape=note, label=\"{}: {}\"];",
            orientation_name(k.orientation),
            dot_escape(&k.text)
        );
    }
    for e in &g.base.edges {
        let _ = writeln!(out, "  n{} -> n{};", e.source, e.target);
    }
    for i in g.kept.keys() {
        let _ = writeln!(out, "  x{i} -> n{i} [style=dashed, arrowhead=none];");
    }
    out.push_str("}\n");
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct StructuredUnit {
    index: usize,
    text: String,
    verdict: bool,
    reasoning: String,
    fallback: bool,
    kept_explanation: KeptExplanation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct StructuredGraph {
    claim: String,
    label: VeracityLabel,
    sub_claims: Vec<StructuredUnit>,
    edges: Vec<Edge>,
    summary: String,
}

impl From<&ExplanationGraph> for StructuredGraph {
    fn from(g: &ExplanationGraph) -> Self {
        let sub_claims = g
            .base
            .units()
            .into_iter()
            .map(|i| {
                let v = g.verdict(i);
                StructuredUnit {
                    index: i,
                    text: String::from(g.base.node_text(i).unwrap_or("")),
                    verdict: v.is_some_and(|v| v.prediction),
                    reasoning: v.map(|v| v.reasoning.clone()).unwrap_or_default(),
                    fallback: v.is_some_and(|v| v.fallback),
                    kept_explanation: g.kept.get(&i).cloned().unwrap_or(KeptExplanation {
                        orientation: Orientation::Analysis,
                        text: String::new(),
                    }),
                }
            })
            .collect();
        StructuredGraph {
            claim: g.base.claim.clone(),
            label: g.claim_label,
            sub_claims,
            edges: g.base.edges.clone(),
            summary: g.summary.clone(),
        }
    }
}

/// One JSON record with claim, label, sub-claims (text, verdict, kept
/// explanation), edges and summary. A graph without sub-claims lists the claim
/// itself as unit 0.
pub fn export_structured(g: &ExplanationGraph) -> String {
    serde_json::to_string_pretty(&StructuredGraph::from(g)).expect("structured graph serializes")
}

pub fn parse_structured(text: &str) -> Result<ExplanationGraph, serde_json::Error> {
    let s: StructuredGraph = serde_json::from_str(text)?;
    let mut sub_claims = Vec::new();
    let mut verdicts = Vec::new();
    let mut kept = BTreeMap::new();
    for u in s.sub_claims {
        if u.index != 0 {
            sub_claims.push(u.text);
        }
        verdicts.push(SubClaimVerdict {
            sub_claim_index: u.index,
            reasoning: u.reasoning,
            prediction: u.verdict,
            fallback: u.fallback,
        });
        kept.insert(u.index, u.kept_explanation);
    }
    Ok(ExplanationGraph {
        base: ClaimCenteredGraph { claim: s.claim, sub_claims, edges: s.edges },
        claim_label: s.label,
        verdicts,
        kept,
        summary: s.summary,
    })
}
