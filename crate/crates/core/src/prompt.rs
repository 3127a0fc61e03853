//! Prompt registry.
//!
//! Every template body is plain text with `{{slot}}` markers. Rendering is a
//! pure substitution: each marker must be bound, and nothing else changes.

use alloc::string::String;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("template `{template}` slot `{slot}` is not bound")]
    UnboundSlot { template: &'static str, slot: String },
    #[error("template `{template}` has no slot `{slot}`")]
    UnknownSlot { template: &'static str, slot: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TemplateId {
    Decompose,
    DecomposePlus,
    Edges,
    Hyperedges,
    Rationale,
    /// Rationale without a prior label, used when competing explanations are ablated.
    RationaleSingle,
    Background,
    Inference,
    Summarize,
    Judge,
}

impl TemplateId {
    pub const ALL: [TemplateId; 10] = [
        TemplateId::Decompose,
        TemplateId::DecomposePlus,
        TemplateId::Edges,
        TemplateId::Hyperedges,
        TemplateId::Rationale,
        TemplateId::RationaleSingle,
        TemplateId::Background,
        TemplateId::Inference,
        TemplateId::Summarize,
        TemplateId::Judge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemplateId::Decompose => "decompose",
            TemplateId::DecomposePlus => "decompose_plus",
            TemplateId::Edges => "edges",
            TemplateId::Hyperedges => "hyperedges",
            TemplateId::Rationale => "rationale",
            TemplateId::RationaleSingle => "rationale_single",
            TemplateId::Background => "background",
            TemplateId::Inference => "inference",
            TemplateId::Summarize => "summarize",
            TemplateId::Judge => "judge",
        }
    }

    pub fn body(self) -> &'static str {
        match self {
            TemplateId::Decompose => DECOMPOSE,
            TemplateId::DecomposePlus => DECOMPOSE_PLUS,
            TemplateId::Edges => EDGES,
            TemplateId::Hyperedges => HYPEREDGES,
            TemplateId::Rationale => RATIONALE,
            TemplateId::RationaleSingle => RATIONALE_SINGLE,
            TemplateId::Background => BACKGROUND,
            TemplateId::Inference => INFERENCE,
            TemplateId::Summarize => SUMMARIZE,
            TemplateId::Judge => JUDGE,
        }
    }

    /// Distinct slot names in order of first appearance.
    pub fn slots(self) -> Vec<&'static str> {
        let mut out: Vec<&'static str> = Vec::new();
        for piece in parse(self.body()) {
            if let Piece::Slot(name) = piece {
                if !out.contains(&name) {
                    out.push(name);
                }
            }
        }
        out
    }
}

enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn parse(body: &str) -> Vec<Piece<'_>> {
    let mut pieces = Vec::new();
    let mut rest = body;
    while let Some(open) = rest.find("{{") {
        let Some(close) = rest[open + 2..].find("}}") else { break };
        let name = &rest[open + 2..open + 2 + close];
        if name.is_empty() || !name.bytes().all(|b| b.is_ascii_lowercase() || b == b'_') {
            // Not a slot marker; keep the braces as text.
            pieces.push(Piece::Text(&rest[..open + 2]));
            rest = &rest[open + 2..];
            continue;
        }
        pieces.push(Piece::Text(&rest[..open]));
        pieces.push(Piece::Slot(name));
        rest = &rest[open + 2 + close + 2..];
    }
    pieces.push(Piece::Text(rest));
    pieces
}

/// Substitute every `{{slot}}` in the template body.
pub fn render_prompt(id: TemplateId, bindings: &[(&str, &str)]) -> Result<String, PromptError> {
    let slots = id.slots();
    if let Some((name, _)) = bindings.iter().find(|(name, _)| !slots.contains(name)) {
        return Err(PromptError::UnknownSlot { template: id.name(), slot: String::from(*name) });
    }
    let mut out = String::with_capacity(id.body().len());
    for piece in parse(id.body()) {
        match piece {
            Piece::Text(t) => out.push_str(t),
            Piece::Slot(name) => {
                let value = bindings
                    .iter()
                    .find(|(k, _)| *k == name)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| PromptError::UnboundSlot { template: id.name(), slot: String::from(name) })?;
                out.push_str(value);
            }
        }
    }
    Ok(out)
}

/// `1. first; 2. second; ...` as used by the edge and hyperedge prompts.
pub fn enumerate_sub_claims(sub_claims: &[String]) -> String {
    let parts: Vec<String> = sub_claims
        .iter()
        .enumerate()
        .map(|(i, s)| alloc::format!("{}. {}", i + 1, s))
        .collect();
    parts.join("; ")
}

const DECOMPOSE: &str = "You are a fake news detection assistant. Your primary function is that, given a complex news claim, based on its content, please break it down into several sub-claims relevant to the veracity of the claim. Note that directly generate sub-claims in short and clear manner, avoiding redundancy.

# News claim: {{claim}}";

const EDGES: &str = "You are a graph construction assistant. Your primary function is that, given a complex news claim (index 0), and several sub-claims (index starting from 1) decomposed from the news claim, please use logical relationships to construct a reasoning graph that reflects how the sub-claims contribute to the truth of the overall claim.
Note: Your output should be in a dictionary format with the keys: (\"analysis\", \"edges\").
You should generate directed edges using the indexes of the claims, formatted as a list like [(1, 0), (2, 3), (3, 0)].
# News claim: 0. {{claim}}
# Sub-claims: {{sub_claims}}.";

const RATIONALE: &str = "Given a claim: {{claim}}, a veracity label {{label}}, please give me a streamlined rationale associated with the claim, without explicitly indicating the label, for how it is reasoned as {{label}}. Below are some sentences that may be helpful for the rationale, but they are mixed with noise: {{evidence}}.
Note, please do not repeat the claim and the label in your explanation, just directly output your streamlined rationale in a short and clear manner.";

const RATIONALE_SINGLE: &str = "Given a claim: {{claim}}, please give me a streamlined rationale associated with the claim that analyzes how its veracity should be reasoned. Below are some sentences that may be helpful for the rationale, but they are mixed with noise: {{evidence}}.
Note, please do not repeat the claim in your explanation, just directly output your streamlined rationale in a short and clear manner.";

const INFERENCE: &str = "Graph used for fake news detection:
# Node Content:
Node 0 (claim): {{claim}}
{{sub_claim_nodes}}# Graph Structure: {{graph_structure}}
# Query (Q): What is the label of Node 0 (claim)? Please directly output your predicted label from {{label_set}}.";

const SUMMARIZE: &str = "Given a claim, its corresponding claim-centered graph, and a veracity label {{label}}, please give me the veracity prediction about each sub-claim, and a streamlined rationale associate with the claim for how it is reasoned as {{label}}.
# Claim-centered graph: {{graph}}
Your response should be a Python dictionary with the following structure:
{
    \"sub-claims-veracity\":
    {
        \"sub-claim 1\": {
            \"reasoning\": \"Your analysis about the veracity of sub-claim 1\",
            \"prediction\": \"True/False\"
        },
        ...,
        \"sub-claim n\": {
            \"reasoning\": \"Your analysis about the veracity of sub-claim n.\",
            \"prediction\": \"True/False\"
        }
    },
    \"final-explanation\": \"\"
}";

const BACKGROUND: &str = "You have been specially designed to perform objective contextual analysis for the fake news detection task.
Your primary function is that, according to a news claim and some sentences related to it, please provide a streamlined contextual analysis that helps understand the background, circumstances, or perspectives related to the claim.
Your goal is to summarize the key contextual information — such as background facts, timelines, participants, related events, or uncertainties —that could help people interpret or understand the claim, without expressing any stance on its truthfulness.
Note: Do not repeat the claim itself, and do not imply or indicate any truth judgment.
Just directly output the short and clear contextual rationale.
Given a claim {{claim}} and a set of retrieved relevant reports {{reports}},
please provide a short and clear objective contextual analysis that presents factual background or explanatory information helping to understand the claim, without expressing any stance on its veracity.";

const HYPEREDGES: &str = "You are a hypergraph construction assistant.
Your primary function is that, given a complex news claim (index 0), and several sub-claims (index starting from 1) decomposed from the news claim,
please use topic relationship to construct a reasoning graph that reflects how the sub-claims contribute to the truth of the overall claim.
A hyperedge represents a higher-level topic or reasoning unit that connects multiple related claims (e.g., several sub-claims that jointly address one aspect of the main claim).
Unlike simple pairwise edges, each hyperedge can include more than two nodes to capture shared themes or collective reasoning.
Note: Your output should be in a dictionary format with the keys: (\"analysis\", \"hyperedges\").
You should generate hyperedges using the indexes of the claims, formatted as a list of lists like [[1, 2, 0], [3, 4, 5, 0], [5, 6, 0]].
# News claim: 0. {{claim}}
# Sub-claims: {{sub_claims}}.";

const DECOMPOSE_PLUS: &str = "You are a fake news detection assistant.
Your primary function is to analyze a complex news claim and decompose it into several clear, atomic sub-claims that collectively capture the full meaning and verifiability of the claim.
1. Decomposition Strategies
When analyzing the claim, adopt systematic reasoning strategies to ensure a complete and logically structured breakdown:
- Logical decomposition: Separate the claim into distinct factual assertions that can be verified independently.
- Causal reasoning: Identify cause–effect or condition–result relations.
- Hierarchical reasoning: Distinguish between general and specific statements or between main ideas and supporting facts.
- Factual reasoning: Focus on objectively testable propositions rather than opinions or implications.
2. News and Communication Cues
Incorporate journalistic awareness to better capture how information is presented in news texts:
- Recognize news structures such as headlines, reported statements, and factual details.
- Distinguish reported speech or attribution (e.g., “X said that...”) from factual assertions about reality.
- Identify quantitative or comparative claims (e.g., numbers, rates, trends) and evaluative expressions (e.g., moral or emotional framing).
- If the claim includes a source or attribution, include it as part of the sub-claim (e.g., “Officials claimed that...” or “According to reports,...”).
- When the claim involves ambiguous or questionable sources, make that explicit (e.g., “It is claimed, without evidence, that...”).
3. Dependency Cues
If there are logical dependencies among sub-claims, make them explicit:
- Use connectors such as “if,” “because,” “therefore,” or “as a result.”
- Reflect the logical flow between causes, conditions, and consequences.
4. Factual Dimensions
Ensure coverage of the key fact-checking dimensions as appropriate — such as who, what, when, where, why/how, and consequences.
5. Output Requirements
Each sub-claim should be concise (1–2 sentences), self-contained, and verifiable.
Avoid redundancy and overlapping information.
Base all sub-claims strictly on the information stated or clearly implied in the original claim; do not introduce new facts or assumptions.
Output only the numbered sub-claims list, without any additional explanations or commentary.
# News claim: {{claim}}";

const JUDGE: &str = "You are an impartial evaluator of explanations written by a fake news detection system.
# News claim: {{claim}}
# Gold veracity label: {{label}}
# Explanation: {{explanation}}
Rate the explanation on each metric below using an integer from 1 to 5.
- misleadingness: does the explanation point toward a veracity that disagrees with the gold label? 1 means not misleading, 5 means highly misleading.
- informativeness: does the explanation add new insight such as background details or extra context? 1 means not informative, 5 means highly informative.
- soundness: is the reasoning valid and logical? 1 means not sound, 5 means very sound.
- readability: is the text grammatical, well structured, coherent and easy to follow? 1 means poor, 5 means excellent.
Note: Your output should be in a dictionary format with the keys: (\"misleadingness\", \"informativeness\", \"soundness\", \"readability\"), each mapped to an integer score.";
