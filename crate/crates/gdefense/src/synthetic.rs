//! A deterministic rule-based stand-in for a chat model.
//!
//! It recognises each pipeline prompt by its opening words and answers in the
//! requested format, choosing between alternatives with a hash of the prompt.
//! The replies carry no real judgement; they exist so the whole pipeline can
//! run, and fixtures can be recorded, without network access.

use sha2::{Digest, Sha256};

use crate::gateway::{whitespace_tokens, GenerationRequest, GenerationResponse, Provider, ProviderError};
use gdefense_core::TokenUsage;

#[derive(Debug, Clone, Copy, Default)]
pub struct SyntheticProvider;

fn seed(request: &GenerationRequest) -> u64 {
    let mut h = Sha256::new();
    h.update(request.prompt_text.as_bytes());
    h.update(request.sample.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

fn between<'a>(text: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let from = text.find(start)? + start.len();
    let rest = &text[from..];
    Some(match rest.find(end) {
        Some(e) => &rest[..e],
        None => rest,
    })
}

fn after_last<'a>(text: &'a str, marker: &str) -> &'a str {
    text.rfind(marker).map_or("", |i| &text[i + marker.len()..])
}

fn sentence(s: &str) -> String {
    let s = s.trim().trim_end_matches(['.', ',', ';']);
    let mut c = s.chars();
    match c.next() {
        Some(f) => format!("{}{}.", f.to_uppercase(), c.as_str()),
        None => String::new(),
    }
}

fn decompose(claim: &str) -> String {
    let mut parts: Vec<String> = vec![claim.trim().to_string()];
    for sep in ["; ", ", and ", " and ", ", but ", " but ", " because ", ", while ", ", "] {
        if parts.len() >= 2 {
            break;
        }
        let next: Vec<String> = parts
            .iter()
            .flat_map(|p| p.split(sep).map(str::to_string).collect::<Vec<_>>())
            .filter(|p| p.split_whitespace().count() >= 2)
            .collect();
        if next.len() >= 2 {
            parts = next;
        }
    }
    if parts.len() < 2 {
        let head: Vec<&str> = claim.split_whitespace().take(6).collect();
        parts.push(format!("The statement about {} is reported accurately", head.join(" ")));
    }
    parts.iter().take(5).enumerate().map(|(i, p)| format!("{}. {}", i + 1, sentence(p))).collect::<Vec<_>>().join("\n")
}

fn count_enumerated(list: &str) -> usize {
    let mut n = 0;
    while list.contains(&format!("{}. ", n + 1)) {
        n += 1;
    }
    n
}

fn edges(n: usize, s: u64) -> String {
    let mut pairs = Vec::new();
    for i in 1..=n {
        if i > 1 && (s >> i) & 1 == 1 {
            pairs.push(format!("({i}, {})", i - 1));
        } else {
            pairs.push(format!("({i}, 0)"));
        }
    }
    format!(
        "{{\"analysis\": \"Each sub-claim supports the claim directly or through the sub-claim before it.\", \"edges\": [{}]}}",
        pairs.join(", ")
    )
}

fn hyperedges(n: usize, s: u64) -> String {
    let split = 1 + (s as usize % n.max(1));
    let first: Vec<String> = (1..=split).map(|i| i.to_string()).collect();
    let mut groups = vec![format!("[{}, 0]", first.join(", "))];
    if split < n {
        let rest: Vec<String> = (split + 1..=n).map(|i| i.to_string()).collect();
        groups.push(format!("[{}, 0]", rest.join(", ")));
    }
    format!("{{\"analysis\": \"Sub-claims grouped by topic.\", \"hyperedges\": [{}]}}", groups.join(", "))
}

fn first_evidence(section: &str) -> Option<&str> {
    section.lines().map(str::trim).find(|l| !l.is_empty() && *l != ".")
}

fn rationale(prompt: &str) -> String {
    let label = between(prompt, "a veracity label ", ",").unwrap_or("true").trim();
    let evidence = between(prompt, "mixed with noise: ", "\nNote,").unwrap_or("");
    let cue = first_evidence(evidence).map(|e| e.trim_end_matches('.').to_string());
    match (label, cue) {
        ("true", Some(e)) => format!("Reporting backs this point: {e}."),
        ("true", None) => "Nothing in general knowledge contradicts this point.".to_string(),
        (_, Some(e)) => format!("The reporting leaves this point unsupported: {e}."),
        (_, None) => "Without supporting reports this point cannot be confirmed.".to_string(),
    }
}

fn analysis(prompt: &str) -> String {
    let evidence = between(prompt, "mixed with noise: ", "\nNote,").unwrap_or("");
    match first_evidence(evidence) {
        Some(e) => format!("The most relevant report states: {}", e.trim()),
        None => "No report addresses this point directly.".to_string(),
    }
}

fn background(prompt: &str) -> String {
    let reports = between(prompt, "retrieved relevant reports ", ",\nplease").unwrap_or("");
    match first_evidence(reports) {
        Some(e) => format!("Related coverage provides context: {}", e.trim()),
        None => "Little related coverage is available.".to_string(),
    }
}

fn infer(prompt: &str, s: u64) -> String {
    let set = between(prompt, "predicted label from {", "}").unwrap_or("false, true");
    let labels: Vec<&str> = set.split(", ").collect();
    let pick = labels[s as usize % labels.len()];
    if (s >> 8).is_multiple_of(4) {
        format!("The claim is {pick}.")
    } else {
        pick.to_string()
    }
}

fn summarize(prompt: &str, s: u64) -> String {
    let label = between(prompt, "a veracity label ", ",").unwrap_or("true").trim().to_string();
    let mut n = 0;
    while prompt.contains(&format!("Node {} (Sub-claim {})", n + 1, n + 1)) {
        n += 1;
    }
    let entries: Vec<String> = (1..=n)
        .map(|i| {
            let verdict = if (s >> i) & 1 == 1 { "True" } else { "False" };
            format!(
                "        \"sub-claim {i}\": {{\n            \"reasoning\": \"The explanations for sub-claim {i} point to {}.\",\n            \"prediction\": \"{verdict}\"\n        }}",
                verdict.to_lowercase()
            )
        })
        .collect();
    format!(
        "{{\n    \"sub-claims-veracity\":\n    {{\n{}\n    }},\n    \"final-explanation\": \"Weighing the competing explanations for each sub-claim, the claim is best rated {label}.\"\n}}",
        entries.join(",\n")
    )
}

fn judge(s: u64) -> String {
    format!(
        "{{\"misleadingness\": {}, \"informativeness\": {}, \"soundness\": {}, \"readability\": {}}}",
        1 + s % 3,
        2 + (s >> 4) % 4,
        2 + (s >> 8) % 4,
        3 + (s >> 12) % 3
    )
}

/// The reply the synthetic model gives to `request`.
pub fn synthetic_reply(request: &GenerationRequest) -> String {
    let p = request.prompt_text.as_str();
    let s = seed(request);
    if p.starts_with("You are a fake news detection assistant.") {
        decompose(after_last(p, "# News claim: "))
    } else if p.starts_with("You are a graph construction assistant.") {
        edges(count_enumerated(after_last(p, "# Sub-claims: ")), s)
    } else if p.starts_with("You are a hypergraph construction assistant.") {
        hyperedges(count_enumerated(after_last(p, "# Sub-claims: ")), s)
    } else if p.starts_with("Given a claim: ") && p.contains("a veracity label ") {
        rationale(p)
    } else if p.starts_with("Given a claim: ") {
        analysis(p)
    } else if p.starts_with("You have been specially designed") {
        background(p)
    } else if p.starts_with("Graph used for fake news detection:") {
        infer(p, s)
    } else if p.starts_with("Given a claim, its corresponding claim-centered graph") {
        summarize(p, s)
    } else if p.starts_with("You are an impartial evaluator") {
        judge(s)
    } else {
        "I cannot help with that request.".to_string()
    }
}

impl Provider for SyntheticProvider {
    fn complete(&self, request: &GenerationRequest) -> Result<GenerationResponse, ProviderError> {
        let text = synthetic_reply(request);
        let usage = TokenUsage::new(whitespace_tokens(&request.prompt_text), whitespace_tokens(&text));
        Ok(GenerationResponse { text, usage })
    }
}
