//! Claim-centered graph construction: decomposition, dependency edges, the
//! sub-claim → claim safeguard, and the hypergraph variant.

use alloc::collections::{BTreeSet, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::llm::{Generator, LlmError, Stage, GENERATION_TEMPERATURE};
use crate::prompt::{enumerate_sub_claims, render_prompt, TemplateId};
use crate::pyliteral::{find_dict, find_key, Value};

/// Re-prompts allowed after a malformed reply before falling back or failing.
pub const MAX_REPROMPTS: usize = 2;
/// A claim must decompose into at least this many sub-claims.
pub const MIN_SUB_CLAIMS: usize = 2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("claim decomposed into {found} sub-claim(s) after {attempts} attempt(s)")]
    DecompositionFailed { found: usize, attempts: usize },
    #[error("a claim-centered graph needs at least {MIN_SUB_CLAIMS} sub-claims, got {0}")]
    TooFewSubClaims(usize),
    #[error("no edge list found in reply")]
    EdgeParse,
    #[error("no hyperedge list found after {0} attempt(s)")]
    HyperedgeParse(usize),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecompositionPrompt {
    Standard,
    DecompPlus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeProvenance {
    LlmGenerated,
    Safeguard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub provenance: EdgeProvenance,
}

/// Claim (node 0) plus sub-claims (nodes 1..=n) and directed dependency edges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimCenteredGraph {
    pub claim: String,
    pub sub_claims: Vec<String>,
    pub edges: Vec<Edge>,
}

impl ClaimCenteredGraph {
    /// Union of `llm_edges` with `(i, 0)` for every sub-claim. Duplicates keep
    /// their first provenance; self-loops and out-of-range endpoints are dropped.
    pub fn assemble(
        claim: impl Into<String>,
        sub_claims: Vec<String>,
        llm_edges: &[(usize, usize)],
    ) -> Result<Self, GraphError> {
        let n = sub_claims.len();
        if n < MIN_SUB_CLAIMS {
            return Err(GraphError::TooFewSubClaims(n));
        }
        let mut seen = BTreeSet::new();
        let mut edges = Vec::new();
        let safeguard = (1..=n).map(|i| (i, 0, EdgeProvenance::Safeguard));
        let proposed = llm_edges.iter().map(|&(s, t)| (s, t, EdgeProvenance::LlmGenerated));
        for (source, target, provenance) in proposed.chain(safeguard) {
            if source == target || source > n || target > n {
                continue;
            }
            if seen.insert((source, target)) {
                edges.push(Edge { source, target, provenance });
            }
        }
        Ok(ClaimCenteredGraph { claim: claim.into(), sub_claims, edges })
    }

    /// Single-node graph used when decomposition is ablated.
    pub fn claim_only(claim: impl Into<String>) -> Self {
        ClaimCenteredGraph { claim: claim.into(), sub_claims: Vec::new(), edges: Vec::new() }
    }

    /// Re-run assembly over this graph's own edges, keeping provenance.
    pub fn reassemble(&self) -> Result<Self, GraphError> {
        let mut g = Self::assemble(self.claim.clone(), self.sub_claims.clone(), &[])?;
        let mut edges: Vec<Edge> = self.edges.clone();
        for e in g.edges.drain(..) {
            if !edges.iter().any(|x| x.source == e.source && x.target == e.target) {
                edges.push(e);
            }
        }
        g.edges = edges;
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.sub_claims.len()
    }

    pub fn node_count(&self) -> usize {
        self.sub_claims.len() + 1
    }

    pub fn is_claim_only(&self) -> bool {
        self.sub_claims.is_empty()
    }

    /// Indices explanations attach to: the sub-claims, or the claim itself when
    /// there are none.
    pub fn units(&self) -> Vec<usize> {
        if self.is_claim_only() {
            vec![0]
        } else {
            (1..=self.n()).collect()
        }
    }

    /// Text of node `index` (0 is the claim).
    pub fn node_text(&self, index: usize) -> Option<&str> {
        match index {
            0 => Some(&self.claim),
            i => self.sub_claims.get(i - 1).map(String::as_str),
        }
    }

    pub fn edge_pairs(&self) -> BTreeSet<(usize, usize)> {
        self.edges.iter().map(|e| (e.source, e.target)).collect()
    }

    /// Sources of edges into `node`, ascending.
    pub fn incoming(&self, node: usize) -> Vec<usize> {
        let set: BTreeSet<usize> = self.edges.iter().filter(|e| e.target == node).map(|e| e.source).collect();
        set.into_iter().collect()
    }

    /// Every node has a directed path to node 0.
    pub fn all_reach_claim(&self) -> bool {
        // Walk edges backwards from node 0.
        let mut reached = vec![false; self.node_count()];
        reached[0] = true;
        let mut queue = VecDeque::from([0usize]);
        while let Some(v) = queue.pop_front() {
            for e in self.edges.iter().filter(|e| e.target == v) {
                if !reached[e.source] {
                    reached[e.source] = true;
                    queue.push_back(e.source);
                }
            }
        }
        reached.into_iter().all(|r| r)
    }

    /// Check the structural invariants; returns the first violation found.
    pub fn check_invariants(&self) -> Result<(), String> {
        let n = self.n();
        if n < MIN_SUB_CLAIMS {
            return Err(format!("only {n} sub-claims"));
        }
        let mut seen = BTreeSet::new();
        for e in &self.edges {
            if e.source == e.target {
                return Err(format!("self-loop on {}", e.source));
            }
            if e.source > n || e.target > n {
                return Err(format!("edge ({}, {}) out of range", e.source, e.target));
            }
            if !seen.insert((e.source, e.target)) {
                return Err(format!("duplicate edge ({}, {})", e.source, e.target));
            }
        }
        if let Some(i) = (1..=n).find(|i| !seen.contains(&(*i, 0))) {
            return Err(format!("missing safeguard edge ({i}, 0)"));
        }
        if !self.all_reach_claim() {
            return Err(String::from("some node cannot reach the claim"));
        }
        Ok(())
    }
}

/// Split a decomposition reply into sub-claims: one per non-empty line, with
/// enumeration markers removed.
pub fn parse_sub_claims(text: &str) -> Vec<String> {
    text.lines()
        .map(strip_enumeration)
        .filter(|line| !line.is_empty() && !is_list_header(line))
        .map(String::from)
        .collect()
}

fn strip_enumeration(line: &str) -> &str {
    let mut s = line.trim();
    // "Sub-claim 2:" style prefixes.
    let lower = s.to_ascii_lowercase();
    if lower.starts_with("sub-claim") || lower.starts_with("subclaim") {
        if let Some(colon) = s.find(':') {
            if s[..colon].split_whitespace().count() <= 2 {
                s = s[colon + 1..].trim_start();
            }
        }
    }
    for bullet in ["-", "*", "•", "–", "—"] {
        if let Some(rest) = s.strip_prefix(bullet) {
            return rest.trim_start();
        }
    }
    // "1.", "1)", "(1)", "1:".
    let inner = s.strip_prefix('(').unwrap_or(s);
    let digits = inner.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 {
        let rest = &inner[digits..];
        for sep in [".", ")", ":"] {
            if let Some(after) = rest.strip_prefix(sep) {
                if after.is_empty() || after.starts_with(char::is_whitespace) {
                    return after.trim_start();
                }
            }
        }
    }
    s
}

fn is_list_header(line: &str) -> bool {
    let l = line.trim_end_matches(':').trim().to_ascii_lowercase();
    matches!(l.as_str(), "sub-claims" | "subclaims" | "sub-claim" | "sub claims")
}

/// Decompose `claim`, re-prompting up to [`MAX_REPROMPTS`] times while the
/// reply yields fewer than [`MIN_SUB_CLAIMS`] sub-claims.
pub fn decompose_claim<G: Generator>(
    generator: &G,
    claim: &str,
    variant: DecompositionPrompt,
) -> Result<Vec<String>, GraphError> {
    let template = match variant {
        DecompositionPrompt::Standard => TemplateId::Decompose,
        DecompositionPrompt::DecompPlus => TemplateId::DecomposePlus,
    };
    let prompt = render_prompt(template, &[("claim", claim)]).expect("decomposition slots");
    let mut found = 0;
    for attempt in 1..=MAX_REPROMPTS + 1 {
        let reply = generator.generate(Stage::ClaimDecomposition, &prompt, GENERATION_TEMPERATURE)?;
        let subs = parse_sub_claims(&reply);
        if subs.len() >= MIN_SUB_CLAIMS {
            return Ok(subs);
        }
        found = subs.len();
        let _ = attempt;
    }
    Err(GraphError::DecompositionFailed { found, attempts: MAX_REPROMPTS + 1 })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedEdges {
    pub edges: Vec<(usize, usize)>,
    pub warnings: Vec<String>,
}

fn lookup(text: &str, key: &str) -> Option<Value> {
    find_dict(text)
        .and_then(|d| d.get(key).cloned())
        .or_else(|| find_key(text, key))
}

fn as_index(v: &Value) -> Option<usize> {
    v.as_int().and_then(|i| usize::try_from(i).ok())
}

/// Extract the `"edges"` list from a key-value reply for a graph with `n`
/// sub-claims. Accepts `(a, b)` and `[a, b]` pairs; drops self-loops,
/// out-of-range endpoints and duplicates with a warning each.
pub fn parse_edge_response(text: &str, n: usize) -> Result<ParsedEdges, GraphError> {
    let value = lookup(text, "edges").ok_or(GraphError::EdgeParse)?;
    let items = value.as_seq().ok_or(GraphError::EdgeParse)?;
    let mut out = ParsedEdges::default();
    let mut seen = BTreeSet::new();
    for item in items {
        let pair = item.as_seq().filter(|p| p.len() == 2).and_then(|p| Some((as_index(&p[0])?, as_index(&p[1])?)));
        let Some((s, t)) = pair else {
            out.warnings.push(format!("ignored malformed edge {item:?}"));
            continue;
        };
        if s == t {
            out.warnings.push(format!("dropped self-loop ({s}, {t})"));
        } else if s > n || t > n {
            out.warnings.push(format!("dropped out-of-range edge ({s}, {t})"));
        } else if !seen.insert((s, t)) {
            out.warnings.push(format!("dropped duplicate edge ({s}, {t})"));
        } else {
            out.edges.push((s, t));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EdgeGeneration {
    pub edges: Vec<(usize, usize)>,
    pub warnings: Vec<String>,
    /// True when every attempt failed to parse and only safeguard edges remain.
    pub fell_back: bool,
}

/// Ask for dependency edges; after [`MAX_REPROMPTS`] unparseable replies fall
/// back to an empty proposal so only safeguard edges are used.
pub fn generate_edges<G: Generator>(
    generator: &G,
    claim: &str,
    sub_claims: &[String],
) -> Result<EdgeGeneration, LlmError> {
    let enumerated = enumerate_sub_claims(sub_claims);
    let prompt = render_prompt(TemplateId::Edges, &[("claim", claim), ("sub_claims", &enumerated)])
        .expect("edge slots");
    let mut warnings = Vec::new();
    for attempt in 1..=MAX_REPROMPTS + 1 {
        let reply = generator.generate(Stage::EdgeGeneration, &prompt, GENERATION_TEMPERATURE)?;
        match parse_edge_response(&reply, sub_claims.len()) {
            Ok(parsed) => {
                warnings.extend(parsed.warnings);
                return Ok(EdgeGeneration { edges: parsed.edges, warnings, fell_back: false });
            }
            Err(_) => warnings.push(format!("edge reply {attempt} unparseable")),
        }
    }
    warnings.push(String::from("falling back to safeguard edges only"));
    Ok(EdgeGeneration { edges: Vec::new(), warnings, fell_back: true })
}

/// Topic hyperedges over the claim and its sub-claims.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HyperGraph {
    pub claim: String,
    pub sub_claims: Vec<String>,
    pub hyperedges: Vec<Vec<usize>>,
    /// Set when no usable hyperedge was proposed and the all-nodes edge was added.
    pub safeguard: bool,
}

/// Hyperedges, whether the safeguard hyperedge was substituted, and warnings.
pub type ParsedHyperedges = (Vec<Vec<usize>>, bool, Vec<String>);

/// Parse the `"hyperedges"` list. Invalid members are dropped, hyperedges with
/// fewer than two remaining members are discarded, and an empty result is
/// replaced with the single hyperedge `[1, ..., n, 0]`.
pub fn parse_hyperedge_response(text: &str, n: usize) -> Result<ParsedHyperedges, GraphError> {
    let value = lookup(text, "hyperedges").ok_or(GraphError::HyperedgeParse(1))?;
    let items = value.as_seq().ok_or(GraphError::HyperedgeParse(1))?;
    let mut warnings = Vec::new();
    let mut hyperedges = Vec::new();
    for item in items {
        let Some(members) = item.as_seq() else {
            warnings.push(format!("ignored malformed hyperedge {item:?}"));
            continue;
        };
        let mut kept: Vec<usize> = Vec::new();
        for m in members {
            match as_index(m) {
                Some(i) if i <= n && !kept.contains(&i) => kept.push(i),
                _ => warnings.push(format!("dropped hyperedge member {m:?}")),
            }
        }
        if kept.len() >= 2 {
            hyperedges.push(kept);
        } else {
            warnings.push(format!("discarded hyperedge with {} valid member(s)", kept.len()));
        }
    }
    let safeguard = hyperedges.is_empty();
    if safeguard {
        let mut all: Vec<usize> = (1..=n).collect();
        all.push(0);
        hyperedges.push(all);
    }
    Ok((hyperedges, safeguard, warnings))
}

pub fn generate_hyperedges<G: Generator>(
    generator: &G,
    claim: &str,
    sub_claims: &[String],
) -> Result<(HyperGraph, Vec<String>), GraphError> {
    let n = sub_claims.len();
    if n < MIN_SUB_CLAIMS {
        return Err(GraphError::TooFewSubClaims(n));
    }
    let enumerated = enumerate_sub_claims(sub_claims);
    let prompt = render_prompt(TemplateId::Hyperedges, &[("claim", claim), ("sub_claims", &enumerated)])
        .expect("hyperedge slots");
    for _ in 0..=MAX_REPROMPTS {
        let reply = generator.generate(Stage::EdgeGeneration, &prompt, GENERATION_TEMPERATURE)?;
        if let Ok((hyperedges, safeguard, warnings)) = parse_hyperedge_response(&reply, n) {
            let graph = HyperGraph {
                claim: String::from(claim),
                sub_claims: sub_claims.to_vec(),
                hyperedges,
                safeguard,
            };
            return Ok((graph, warnings));
        }
    }
    Err(GraphError::HyperedgeParse(MAX_REPROMPTS + 1))
}
