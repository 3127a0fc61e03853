//! Graph serialization, inference prompt assembly and label prediction.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::explain::{CompetingExplanations, ExplanationTexts};
use crate::graph::{ClaimCenteredGraph, HyperGraph};
use crate::label::{parse_label_string, VeracityLabel, VeracityScheme};
use crate::llm::{Generator, LlmError, Stage, GENERATION_TEMPERATURE};
use crate::prompt::{render_prompt, TemplateId};

/// Suffix appended to the inference prompt after an unparseable reply.
pub const LABEL_REPROMPT: &str = "Answer with exactly one label.";
/// Tolerance on the probability simplex returned by an adapter.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

const QUERY_MARKER: &str = "\n# Query (Q):";
const STRUCTURE_LINE: &str = "# Graph Structure: \n";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SerializedGraph {
    pub text: String,
}

fn join_sources(sources: &[usize]) -> String {
    match sources {
        [] => String::new(),
        [a] => format!("node {a}"),
        [a, b] => format!("nodes {a} and {b}"),
        [init @ .., last] => {
            let head: Vec<String> = init.iter().map(usize::to_string).collect();
            format!("nodes {}, and {last}", head.join(", "))
        }
    }
}

fn node_list(count: usize) -> String {
    let ids: Vec<String> = (0..count).map(|i| i.to_string()).collect();
    ids.join(", ")
}

/// Describe the incoming-edge structure in plain sentences. Explanations are
/// node attributes and never appear here.
pub fn graph_to_seq(graph: &ClaimCenteredGraph) -> SerializedGraph {
    let mut text = format!("Directed Graph describes a graph among {}.", node_list(graph.node_count()));
    for node in 0..graph.node_count() {
        let sources = graph.incoming(node);
        if !sources.is_empty() {
            let _ = write!(text, " Node {node} is connected to {} by incoming edges.", join_sources(&sources));
        }
    }
    SerializedGraph { text }
}

/// Hyperedge counterpart of [`graph_to_seq`].
pub fn hypergraph_to_seq(graph: &HyperGraph) -> SerializedGraph {
    let nodes = graph.sub_claims.len() + 1;
    let mut text = format!("Hypergraph describes a hypergraph among {}.", node_list(nodes));
    for (i, members) in graph.hyperedges.iter().enumerate() {
        let ids: Vec<String> = members.iter().map(usize::to_string).collect();
        let _ = write!(text, " Hyperedge {} groups nodes {}.", i + 1, ids.join(", "));
    }
    SerializedGraph { text }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InferenceError {
    #[error("explanations missing for nodes {0:?}")]
    MissingExplanations(Vec<usize>),
    #[error("explanations given for unknown nodes {0:?}")]
    UnexpectedExplanations(Vec<usize>),
    #[error("could not read a label from the reply: {0}")]
    PredictionFailed(String),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

/// A claim graph with explanations attached to each unit node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefenseGraph {
    pub base: ClaimCenteredGraph,
    pub explanations: BTreeMap<usize, CompetingExplanations>,
}

impl DefenseGraph {
    /// Explanations must cover exactly the graph's units.
    pub fn new(base: ClaimCenteredGraph, explanations: Vec<CompetingExplanations>) -> Result<Self, InferenceError> {
        let map: BTreeMap<usize, CompetingExplanations> =
            explanations.into_iter().map(|e| (e.sub_claim_index, e)).collect();
        let units = base.units();
        let missing: Vec<usize> = units.iter().copied().filter(|u| !map.contains_key(u)).collect();
        if !missing.is_empty() {
            return Err(InferenceError::MissingExplanations(missing));
        }
        let extra: Vec<usize> = map.keys().copied().filter(|k| !units.contains(k)).collect();
        if !extra.is_empty() {
            return Err(InferenceError::UnexpectedExplanations(extra));
        }
        Ok(DefenseGraph { base, explanations: map })
    }

    pub fn explanation_count(&self) -> usize {
        self.explanations.values().map(CompetingExplanations::count).sum()
    }
}

fn attribute_lines(out: &mut String, e: &CompetingExplanations) {
    match &e.texts {
        ExplanationTexts::Competing { false_oriented, true_oriented } => {
            let _ = writeln!(
                out,
                "Competing explanations: True-oriented explanation: {true_oriented}; False-oriented explanation: {false_oriented}."
            );
        }
        ExplanationTexts::Single { analysis } => {
            let _ = writeln!(out, "Explanation: {analysis}.");
        }
    }
    if let Some(b) = &e.background {
        let _ = writeln!(out, "Background: {b}.");
    }
}

/// Render the inference prompt. `structure` fills the Graph Structure section;
/// `None` removes that section entirely.
pub fn build_inference_prompt(graph: &DefenseGraph, scheme: VeracityScheme, structure: Option<&str>) -> String {
    let mut nodes = String::new();
    if graph.base.is_claim_only() {
        if let Some(e) = graph.explanations.get(&0) {
            attribute_lines(&mut nodes, e);
        }
    }
    for (i, sub) in graph.base.sub_claims.iter().enumerate() {
        let idx = i + 1;
        let _ = writeln!(nodes, "Node {idx} (Sub-claim {idx}): {sub};");
        if let Some(e) = graph.explanations.get(&idx) {
            attribute_lines(&mut nodes, e);
        }
    }
    let label_set = scheme.label_set_text();
    let rendered = render_prompt(
        TemplateId::Inference,
        &[
            ("claim", &graph.base.claim),
            ("sub_claim_nodes", &nodes),
            ("graph_structure", structure.unwrap_or("")),
            ("label_set", &label_set),
        ],
    )
    .expect("inference slots");
    match structure {
        Some(_) => rendered,
        None => rendered.replacen(STRUCTURE_LINE, "", 1),
    }
}

/// The node-content and structure part of an inference prompt, without the
/// query.
pub fn graph_section(prompt: &str) -> &str {
    match prompt.find(QUERY_MARKER) {
        Some(at) => &prompt[..at],
        None => prompt,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionSource {
    ZeroShot,
    ExternalClassifier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub label: VeracityLabel,
    pub probabilities: Option<Vec<f64>>,
    pub source: PredictionSource,
}

/// Ask the model for the label directly; one re-prompt on an unreadable reply.
pub fn predict_zero_shot<G: Generator>(
    generator: &G,
    prompt: &str,
    scheme: VeracityScheme,
) -> Result<PredictionResult, InferenceError> {
    let reply = generator.generate(Stage::Inference, prompt, GENERATION_TEMPERATURE)?;
    let label = match parse_label_string(&reply, scheme) {
        Ok(l) => l,
        Err(_) => {
            let retry = format!("{prompt}\n{LABEL_REPROMPT}");
            let reply = generator.generate(Stage::Inference, &retry, GENERATION_TEMPERATURE)?;
            parse_label_string(&reply, scheme).map_err(|e| InferenceError::PredictionFailed(e.to_string()))?
        }
    };
    Ok(PredictionResult { label, probabilities: None, source: PredictionSource::ZeroShot })
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AdapterError {
    /// The adapter could not be reached or did not answer; worth retrying.
    #[error("adapter transport failure: {0}")]
    Transport(String),
    /// The adapter answered with something that breaks the wire contract.
    #[error("adapter contract violation: {0}")]
    Contract(String),
}

/// An externally trained classifier that scores a prompt against a label list.
pub trait ClassifierAdapter {
    fn classify(&self, prompt_text: &str, labels: &[&str]) -> Result<Vec<f64>, AdapterError>;
}

impl<A: ClassifierAdapter + ?Sized> ClassifierAdapter for &A {
    fn classify(&self, prompt_text: &str, labels: &[&str]) -> Result<Vec<f64>, AdapterError> {
        (**self).classify(prompt_text, labels)
    }
}

/// Check `probs` is a distribution over `len` labels and return its argmax,
/// the lowest index winning ties.
pub fn argmax_checked(probs: &[f64], len: usize) -> Result<usize, AdapterError> {
    if probs.len() != len {
        return Err(AdapterError::Contract(format!("expected {len} probabilities, got {}", probs.len())));
    }
    if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(AdapterError::Contract(format!("invalid probability {p}")));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(AdapterError::Contract(format!("probabilities sum to {sum}")));
    }
    let mut best = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > probs[best] {
            best = i;
        }
    }
    Ok(best)
}

pub fn predict_external<A: ClassifierAdapter>(
    adapter: &A,
    prompt: &str,
    scheme: VeracityScheme,
) -> Result<PredictionResult, InferenceError> {
    let labels = scheme.labels();
    let probs = adapter.classify(prompt, labels)?;
    let best = argmax_checked(&probs, labels.len())?;
    Ok(PredictionResult {
        label: scheme.label(best).expect("index within scheme"),
        probabilities: Some(probs),
        source: PredictionSource::ExternalClassifier,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::testing::Script;
    use crate::retrieval::EvidenceSet;
    use alloc::vec;

    fn subs(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("sub {i}")).collect()
    }

    fn pair(i: usize) -> CompetingExplanations {
        CompetingExplanations {
            sub_claim_index: i,
            texts: ExplanationTexts::Competing { false_oriented: format!("neg {i}"), true_oriented: format!("pos {i}") },
            evidence: EvidenceSet::empty(i, 5),
            background: None,
        }
    }

    #[test]
    fn serializes_example_graph() {
        let g = ClaimCenteredGraph {
            claim: "c".into(),
            sub_claims: subs(5),
            edges: [(3, 0), (4, 0), (5, 0), (1, 3), (2, 3)]
                .into_iter()
                .map(|(source, target)| crate::graph::Edge {
                    source,
                    target,
                    provenance: crate::graph::EdgeProvenance::LlmGenerated,
                })
                .collect(),
        };
        assert_eq!(
            graph_to_seq(&g).text,
            "Directed Graph describes a graph among 0, 1, 2, 3, 4, 5. Node 0 is connected to nodes 3, 4, and 5 by \
             incoming edges. Node 3 is connected to nodes 1 and 2 by incoming edges."
        );
    }

    #[test]
    fn serializes_small_graphs() {
        let g = ClaimCenteredGraph::assemble("c", subs(2), &[]).unwrap();
        assert_eq!(
            graph_to_seq(&g).text,
            "Directed Graph describes a graph among 0, 1, 2. Node 0 is connected to nodes 1 and 2 by incoming edges."
        );
        let g = ClaimCenteredGraph::assemble("c", subs(2), &[(1, 2)]).unwrap();
        assert!(graph_to_seq(&g).text.ends_with("Node 2 is connected to node 1 by incoming edges."));
    }

    #[test]
    fn prompt_layout() {
        let base = ClaimCenteredGraph::assemble("The claim", subs(2), &[]).unwrap();
        let seq = graph_to_seq(&base).text;
        let dg = DefenseGraph::new(base, vec![pair(1), pair(2)]).unwrap();
        let p = build_inference_prompt(&dg, VeracityScheme::ThreeWay, Some(&seq));
        let expected = format!(
            "Graph used for fake news detection:\n# Node Content:\nNode 0 (claim): The claim\n\
             Node 1 (Sub-claim 1): sub 1;\nCompeting explanations: True-oriented explanation: pos 1; False-oriented explanation: neg 1.\n\
             Node 2 (Sub-claim 2): sub 2;\nCompeting explanations: True-oriented explanation: pos 2; False-oriented explanation: neg 2.\n\
             # Graph Structure: {seq}\n\
             # Query (Q): What is the label of Node 0 (claim)? Please directly output your predicted label from {{false, half, true}}."
        );
        assert_eq!(p, expected);
        assert!(graph_section(&p).ends_with(&seq));

        let six = build_inference_prompt(&dg, VeracityScheme::SixWay, Some(&seq));
        assert!(six.ends_with("from {pants-fire, false, barely-true, half-true, mostly-true, true}."));

        let bare = build_inference_prompt(&dg, VeracityScheme::ThreeWay, None);
        assert!(!bare.contains("# Graph Structure"));
        assert!(bare.contains("neg 2.\n# Query (Q)"));
    }

    #[test]
    fn defense_graph_coverage() {
        let base = ClaimCenteredGraph::assemble("c", subs(3), &[]).unwrap();
        assert_eq!(
            DefenseGraph::new(base.clone(), vec![pair(1), pair(3)]),
            Err(InferenceError::MissingExplanations(vec![2]))
        );
        assert_eq!(
            DefenseGraph::new(base, vec![pair(1), pair(2), pair(3), pair(4)]),
            Err(InferenceError::UnexpectedExplanations(vec![4]))
        );
    }

    #[test]
    fn zero_shot_paths() {
        let t = VeracityScheme::ThreeWay;
        let g = Script::new(["half"]);
        assert_eq!(predict_zero_shot(&g, "p", t).unwrap().label.name(), "half");
        let g = Script::new(["It is false."]);
        assert_eq!(predict_zero_shot(&g, "p", t).unwrap().label.name(), "false");
        let g = Script::new(["maybe", "maybe"]);
        assert!(matches!(predict_zero_shot(&g, "p", t), Err(InferenceError::PredictionFailed(_))));
        assert_eq!(g.prompts()[1], "p\nAnswer with exactly one label.");
    }

    struct Fixed(Vec<f64>);
    impl ClassifierAdapter for Fixed {
        fn classify(&self, _: &str, _: &[&str]) -> Result<Vec<f64>, AdapterError> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn external_argmax_and_contract() {
        let t = VeracityScheme::ThreeWay;
        let r = predict_external(&Fixed(vec![0.1, 0.7, 0.2]), "p", t).unwrap();
        assert_eq!(r.label.name(), "half");
        assert_eq!(r.source, PredictionSource::ExternalClassifier);
        assert_eq!(predict_external(&Fixed(vec![0.5, 0.5, 0.0]), "p", t).unwrap().label.name(), "false");
        for bad in [vec![0.2; 5], vec![-0.1, 0.6, 0.5], vec![0.3, 0.3, 0.3]] {
            assert!(matches!(
                predict_external(&Fixed(bad), "p", t),
                Err(InferenceError::Adapter(AdapterError::Contract(_)))
            ));
        }
    }
}
