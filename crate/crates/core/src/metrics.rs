//! Classification metrics, label discrepancy and explanation judging.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::label::{LabelError, VeracityLabel, VeracityScheme};
use crate::llm::{Generator, LlmError, Stage, JUDGE_TEMPERATURE};
use crate::prompt::{render_prompt, TemplateId};
use crate::pyliteral::{find_dict, find_key, Value};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("confusion matrix is empty")]
    Empty,
    #[error(transparent)]
    Label(#[from] LabelError),
}

/// Gold labels on rows, predictions on columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub scheme: VeracityScheme,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(scheme: VeracityScheme) -> Self {
        let l = scheme.len();
        ConfusionMatrix { scheme, counts: vec![vec![0; l]; l] }
    }

    /// Panics unless `counts` is square with one row per label of `scheme`.
    pub fn from_counts(scheme: VeracityScheme, counts: Vec<Vec<u64>>) -> Self {
        let l = scheme.len();
        assert!(counts.len() == l && counts.iter().all(|r| r.len() == l), "matrix shape must be {l}x{l}");
        ConfusionMatrix { scheme, counts }
    }

    pub fn record(&mut self, gold: VeracityLabel, predicted: VeracityLabel) -> Result<(), LabelError> {
        for label in [gold, predicted] {
            if label.scheme() != self.scheme {
                return Err(LabelError::SchemeMismatch {
                    label: label.name(),
                    found: label.scheme(),
                    expected: self.scheme,
                });
            }
        }
        self.counts[gold.index()][predicted.index()] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| (0..self.counts.len()).map(|i| self.counts[i][i]).sum::<u64>() as f64 / total as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: Vec<ClassMetrics>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Macro-averaged precision, recall and F1. A class that is never predicted
/// (or never gold) contributes 0 to precision (or recall), and its F1 term is
/// 0 when both are 0.
pub fn macro_metrics(m: &ConfusionMatrix) -> Result<MacroMetrics, MetricsError> {
    if m.total() == 0 {
        return Err(MetricsError::Empty);
    }
    let l = m.counts.len();
    let per_class: Vec<ClassMetrics> = (0..l)
        .map(|c| {
            let tp = m.counts[c][c];
            let predicted: u64 = m.counts.iter().map(|row| row[c]).sum();
            let gold: u64 = m.counts[c].iter().sum();
            let p = ratio(tp, predicted);
            let r = ratio(tp, gold);
            let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
            ClassMetrics { precision: p, recall: r, f1, support: gold }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / l as f64;
    Ok(MacroMetrics {
        precision: mean(|c| c.precision),
        recall: mean(|c| c.recall),
        f1: mean(|c| c.f1),
        per_class,
    })
}

/// Absolute score gap between two labels of the same scheme.
pub fn discrepancy(predicted: VeracityLabel, gold: VeracityLabel) -> Result<f64, LabelError> {
    if predicted.scheme() != gold.scheme() {
        return Err(LabelError::SchemeMismatch {
            label: predicted.name(),
            found: predicted.scheme(),
            expected: gold.scheme(),
        });
    }
    Ok((predicted.score() - gold.score()).abs())
}

/// Largest possible discrepancy in any scheme.
pub const MAX_DISCREPANCY: f64 = 5.0;

/// Likert scores from 1 to 5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeScores {
    pub misleadingness: u8,
    pub informativeness: u8,
    pub soundness: u8,
    pub readability: u8,
}

impl JudgeScores {
    pub const KEYS: [&'static str; 4] = ["misleadingness", "informativeness", "soundness", "readability"];

    pub fn new(misleadingness: u8, informativeness: u8, soundness: u8, readability: u8) -> Option<Self> {
        let s = JudgeScores { misleadingness, informativeness, soundness, readability };
        s.as_array().iter().all(|v| (1..=5).contains(v)).then_some(s)
    }

    pub fn as_array(&self) -> [u8; 4] {
        [self.misleadingness, self.informativeness, self.soundness, self.readability]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum JudgeError {
    #[error("judge reply unusable after retry: {0}")]
    Failed(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

/// Read the four scores from a key-value reply.
pub fn parse_judge_response(text: &str) -> Result<JudgeScores, String> {
    let dict = find_dict(text);
    let mut vals = [0u8; 4];
    for (slot, key) in vals.iter_mut().zip(JudgeScores::KEYS) {
        let v = dict
            .as_ref()
            .and_then(|d| d.get(key).cloned())
            .or_else(|| find_key(text, key))
            .ok_or_else(|| format!("missing `{key}`"))?;
        let n = match v {
            Value::Int(i) => i,
            ref other => other.as_int().ok_or_else(|| format!("`{key}` is not an integer"))?,
        };
        if !(1..=5).contains(&n) {
            return Err(format!("`{key}` = {n} is outside 1..=5"));
        }
        *slot = n as u8;
    }
    Ok(JudgeScores::new(vals[0], vals[1], vals[2], vals[3]).expect("range checked"))
}

pub fn judge_prompt(claim: &str, gold: VeracityLabel, explanation: &str) -> String {
    render_prompt(TemplateId::Judge, &[("claim", claim), ("label", gold.name()), ("explanation", explanation)])
        .expect("judge slots")
}

/// Score one explanation; a missing or out-of-range score earns one re-prompt.
pub fn judge_explanation<G: Generator>(
    generator: &G,
    claim: &str,
    gold: VeracityLabel,
    explanation: &str,
) -> Result<JudgeScores, JudgeError> {
    let prompt = judge_prompt(claim, gold, explanation);
    let mut last = String::new();
    for _ in 0..2 {
        let reply = generator.generate(Stage::Judge, &prompt, JUDGE_TEMPERATURE)?;
        match parse_judge_response(&reply) {
            Ok(s) => return Ok(s),
            Err(e) => last = e,
        }
    }
    Err(JudgeError::Failed(last))
}

/// Means over successfully judged items.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct JudgeAggregate {
    pub count: usize,
    pub misleadingness: f64,
    pub informativeness: f64,
    pub soundness: f64,
    pub readability: f64,
}

impl JudgeAggregate {
    pub fn from_scores<'a>(scores: impl IntoIterator<Item = &'a JudgeScores>) -> Self {
        let mut sums = [0u64; 4];
        let mut count = 0usize;
        for s in scores {
            for (acc, v) in sums.iter_mut().zip(s.as_array()) {
                *acc += u64::from(v);
            }
            count += 1;
        }
        if count == 0 {
            return JudgeAggregate::default();
        }
        let mean = |i: usize| sums[i] as f64 / count as f64;
        JudgeAggregate {
            count,
            misleadingness: mean(0),
            informativeness: mean(1),
            soundness: mean(2),
            readability: mean(3),
        }
    }
}
