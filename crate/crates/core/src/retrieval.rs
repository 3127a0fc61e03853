//! Sentence corpus construction and cosine top-k evidence retrieval.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::record::Report;

/// Default evidence cutoff per sub-claim.
pub const DEFAULT_K: usize = 5;
/// Sentences gathered for the background variant.
pub const BACKGROUND_K: usize = 20;

const ABBREVIATIONS: &[&str] = &[
    "u.s.", "u.k.", "u.n.", "e.g.", "i.e.", "dr.", "mr.", "mrs.", "ms.", "jr.", "sr.", "st.", "vs.",
    "prof.", "gov.", "sen.", "rep.", "gen.", "col.", "lt.", "sgt.", "inc.", "ltd.", "co.", "corp.",
    "no.", "jan.", "feb.", "mar.", "apr.", "jun.", "jul.", "aug.", "sep.", "sept.", "oct.", "nov.",
    "dec.", "a.m.", "p.m.", "d.c.", "approx.", "fig.", "mt.",
];

const CLOSERS: &[char] = &['"', '\'', ')', ']', '”', '’'];

/// Split raw report text on `.`, `!` or `?` followed by whitespace or the end
/// of text. Periods ending a known abbreviation or a single-letter initial do
/// not split. A trailing fragment without a terminator is kept.
pub fn split_report_sentences(raw: &str) -> Vec<String> {
    let mut out = Vec::new();
    let chars: Vec<(usize, char)> = raw.char_indices().collect();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let (_, c) = chars[i];
        if matches!(c, '.' | '!' | '?') {
            // Absorb runs like "?!" or "..." and any closing quotes/brackets.
            let mut j = i + 1;
            while j < chars.len() && matches!(chars[j].1, '.' | '!' | '?') {
                j += 1;
            }
            while j < chars.len() && CLOSERS.contains(&chars[j].1) {
                j += 1;
            }
            let at_boundary = j == chars.len() || chars[j].1.is_whitespace();
            let end_byte = if j == chars.len() { raw.len() } else { chars[j].0 };
            if at_boundary && !(c == '.' && j == i + 1 && is_abbreviation(&raw[start..end_byte])) {
                push_trimmed(&mut out, &raw[start..end_byte]);
                start = end_byte;
            }
            i = j;
        } else {
            i += 1;
        }
    }
    push_trimmed(&mut out, &raw[start..]);
    out
}

fn push_trimmed(out: &mut Vec<String>, s: &str) {
    let t = s.trim();
    if !t.is_empty() {
        out.push(String::from(t));
    }
}

fn is_abbreviation(sentence_so_far: &str) -> bool {
    let last = sentence_so_far.split_whitespace().last().unwrap_or("");
    let token = last.trim_start_matches(|c: char| CLOSERS.contains(&c) || c == '(' || c == '“');
    let lower = token.to_lowercase();
    if ABBREVIATIONS.contains(&lower.as_str()) {
        return true;
    }
    // Single capital initial such as "J." in "J. Smith".
    let mut cs = token.chars();
    matches!((cs.next(), cs.next(), cs.next()), (Some(a), Some('.'), None) if a.is_uppercase())
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RetrievalError {
    #[error("candidate corpus is empty")]
    EmptyCorpus,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("embedding failed: {0}")]
    Embedding(String),
    #[error("candidate ({0}, {1}) has no embedding")]
    NotEmbedded(usize, usize),
}

/// Dense text encoder. Implementations pool token vectors by mean.
pub trait Embedder {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, RetrievalError>;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, RetrievalError> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

impl<E: Embedder + ?Sized> Embedder for &E {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn embed(&self, text: &str) -> Result<Vec<f64>, RetrievalError> {
        (**self).embed(text)
    }
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, RetrievalError> {
        (**self).embed_batch(texts)
    }
}

/// Deterministic bag-of-words embedder for offline runs and tests: each
/// lowercased word hashes to one basis direction and the word vectors are
/// averaged. Empty text yields the zero vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEmbedder {
    dim: usize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashingEmbedder { dim }
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        HashingEmbedder::new(256)
    }
}

impl Embedder for HashingEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, RetrievalError> {
        let mut v = vec![0.0; self.dim];
        let mut count = 0usize;
        for word in text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
            let h = fnv1a(word.to_lowercase().as_bytes());
            v[(h % self.dim as u64) as usize] += 1.0;
            count += 1;
        }
        if count > 0 {
            for x in &mut v {
                *x /= count as f64;
            }
        }
        Ok(v)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn is_degenerate(v: &[f64]) -> bool {
    v.iter().all(|x| *x == 0.0)
}

/// Cosine similarity, `None` when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    debug_assert_eq!(a.len(), b.len());
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((dot / (libm::sqrt(na) * libm::sqrt(nb))).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceCandidate {
    pub report_index: usize,
    pub sentence_index: usize,
    pub text: String,
    #[serde(skip)]
    pub embedding: Option<Vec<f64>>,
}

/// All candidate sentences for one claim, in report order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub candidates: Vec<EvidenceCandidate>,
}

impl Corpus {
    pub fn from_reports(reports: &[Report]) -> Self {
        let candidates = reports
            .iter()
            .flat_map(|r| {
                r.sentences.iter().enumerate().map(move |(si, s)| EvidenceCandidate {
                    report_index: r.index,
                    sentence_index: si,
                    text: s.clone(),
                    embedding: None,
                })
            })
            .collect();
        Corpus { candidates }
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Embed every candidate that has no vector yet.
    pub fn embed_with<E: Embedder>(&mut self, embedder: &E) -> Result<(), RetrievalError> {
        let missing: Vec<usize> = (0..self.candidates.len())
            .filter(|&i| self.candidates[i].embedding.is_none())
            .collect();
        if missing.is_empty() {
            return Ok(());
        }
        let texts: Vec<&str> = missing.iter().map(|&i| self.candidates[i].text.as_str()).collect();
        let vectors = embedder.embed_batch(&texts)?;
        for (i, v) in missing.into_iter().zip(vectors) {
            self.candidates[i].embedding = Some(v);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredEvidence {
    pub report_index: usize,
    pub sentence_index: usize,
    pub text: String,
    /// Cosine similarity to the query; `None` for zero-norm vectors.
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceSet {
    /// Node the evidence was retrieved for (0 when retrieving for the whole claim).
    pub sub_claim_index: usize,
    pub k: usize,
    pub items: Vec<ScoredEvidence>,
}

impl EvidenceSet {
    pub fn empty(sub_claim_index: usize, k: usize) -> Self {
        EvidenceSet { sub_claim_index, k, items: Vec::new() }
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|e| e.text.as_str())
    }

    /// Evidence sentences joined in rank order, one per line.
    pub fn joined(&self) -> String {
        self.texts().collect::<Vec<_>>().join("\n")
    }
}

fn rank_order(a: &(f64, usize, usize), b: &(f64, usize, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
}

/// Top-`k` candidates by cosine similarity to `query`, best first, ties broken
/// by ascending `(report_index, sentence_index)`. Zero-norm vectors rank last.
pub fn retrieve_top_k(
    sub_claim_index: usize,
    query: &[f64],
    corpus: &Corpus,
    k: usize,
) -> Result<EvidenceSet, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::ZeroK);
    }
    if corpus.is_empty() {
        return Err(RetrievalError::EmptyCorpus);
    }
    let mut scored = Vec::with_capacity(corpus.len());
    for (i, c) in corpus.candidates.iter().enumerate() {
        let emb = c
            .embedding
            .as_ref()
            .ok_or(RetrievalError::NotEmbedded(c.report_index, c.sentence_index))?;
        let s = cosine(query, emb).unwrap_or(f64::NEG_INFINITY);
        scored.push(((s, c.report_index, c.sentence_index), i));
    }
    let take = k.min(scored.len());
    if take < scored.len() {
        scored.select_nth_unstable_by(take - 1, |a, b| rank_order(&a.0, &b.0));
        scored.truncate(take);
    }
    scored.sort_unstable_by(|a, b| rank_order(&a.0, &b.0));
    let items = scored
        .into_iter()
        .map(|((s, _, _), i)| {
            let c = &corpus.candidates[i];
            ScoredEvidence {
                report_index: c.report_index,
                sentence_index: c.sentence_index,
                text: c.text.clone(),
                score: s.is_finite().then_some(s),
            }
        })
        .collect();
    Ok(EvidenceSet { sub_claim_index, k, items })
}

/// Embed `text` and retrieve against an already embedded corpus.
pub fn retrieve_for_text<E: Embedder>(
    embedder: &E,
    sub_claim_index: usize,
    text: &str,
    corpus: &Corpus,
    k: usize,
) -> Result<EvidenceSet, RetrievalError> {
    if corpus.is_empty() {
        return Err(RetrievalError::EmptyCorpus);
    }
    let query = embedder.embed(text)?;
    retrieve_top_k(sub_claim_index, &query, corpus, k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| String::from(*x)).collect()
    }

    #[test]
    fn splits_on_terminators() {
        assert_eq!(split_report_sentences("A fact. Another? Yes!"), s(&["A fact.", "Another?", "Yes!"]));
        assert_eq!(split_report_sentences("No terminator here"), s(&["No terminator here"]));
        assert_eq!(split_report_sentences("The U.S. Congress passed it."), s(&["The U.S. Congress passed it."]));
    }

    #[test]
    fn split_edge_cases() {
        assert!(split_report_sentences("   ").is_empty());
        assert_eq!(split_report_sentences("Dr. Smith said so. Really?! \"Yes.\" Done"), s(&[
            "Dr. Smith said so.",
            "Really?!",
            "\"Yes.\"",
            "Done"
        ]));
        assert_eq!(split_report_sentences("Pi is 3.14 today. Ok."), s(&["Pi is 3.14 today.", "Ok."]));
        assert_eq!(split_report_sentences("J. Smith won. Wait..."), s(&["J. Smith won.", "Wait..."]));
    }

    #[test]
    fn hashing_embedder_is_bag_of_words() {
        let e = HashingEmbedder::new(64);
        assert_eq!(e.embed("a b").unwrap(), e.embed("b a").unwrap());
        assert_eq!(e.embed("Same text").unwrap(), e.embed("same TEXT").unwrap());
        let z = e.embed("").unwrap();
        assert!(is_degenerate(&z));
        assert_eq!(z.len(), 64);
    }

    #[test]
    fn cosine_basics() {
        assert!((cosine(&[1.0, 2.0], &[2.0, 4.0]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]), Some(0.0));
        assert_eq!(cosine(&[0.0, 0.0], &[0.0, 1.0]), None);
    }

    fn corpus_of(vectors: &[&[f64]]) -> Corpus {
        Corpus {
            candidates: vectors
                .iter()
                .enumerate()
                .map(|(i, v)| EvidenceCandidate {
                    report_index: 0,
                    sentence_index: i,
                    text: alloc::format!("s{i}"),
                    embedding: Some(v.to_vec()),
                })
                .collect(),
        }
    }

    #[test]
    fn picks_identical_over_orthogonal() {
        let corpus = corpus_of(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let set = retrieve_top_k(1, &[1.0, 0.0], &corpus, 1).unwrap();
        assert_eq!(set.items.len(), 1);
        assert_eq!(set.items[0].text, "s1");
    }

    #[test]
    fn clamps_and_ranks_zero_vectors_last() {
        let corpus = corpus_of(&[&[0.0, 0.0], &[1.0, 1.0], &[-1.0, 0.0]]);
        let set = retrieve_top_k(1, &[1.0, 0.0], &corpus, 5).unwrap();
        let texts: Vec<_> = set.texts().collect();
        assert_eq!(texts, ["s1", "s2", "s0"]);
        assert_eq!(set.items[2].score, None);
    }

    #[test]
    fn ties_break_by_source_order() {
        let corpus = corpus_of(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 0.0]]);
        let set = retrieve_top_k(1, &[1.0, 0.0], &corpus, 2).unwrap();
        let texts: Vec<_> = set.texts().collect();
        assert_eq!(texts, ["s0", "s2"]);
    }

    #[test]
    fn errors() {
        assert_eq!(retrieve_top_k(1, &[1.0], &Corpus::default(), 3), Err(RetrievalError::EmptyCorpus));
        let corpus = corpus_of(&[&[1.0]]);
        assert_eq!(retrieve_top_k(1, &[1.0], &corpus, 0), Err(RetrievalError::ZeroK));
        let mut raw = corpus.clone();
        raw.candidates[0].embedding = None;
        assert_eq!(retrieve_top_k(1, &[1.0], &raw, 1), Err(RetrievalError::NotEmbedded(0, 0)));
    }

    #[test]
    fn corpus_size_is_sentence_total() {
        let reports = [
            Report::from_text(0, "One. Two. Three.").unwrap(),
            Report::from_text(1, "Four!").unwrap(),
        ];
        let mut corpus = Corpus::from_reports(&reports);
        assert_eq!(corpus.len(), 4);
        corpus.embed_with(&HashingEmbedder::new(16)).unwrap();
        assert!(corpus.candidates.iter().all(|c| c.embedding.as_ref().unwrap().len() == 16));
        assert_eq!(corpus.candidates[3].report_index, 1);
        assert_eq!(corpus.candidates[3].sentence_index, 0);
    }
}
