//! Veracity label schemes and label arithmetic.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

const THREE_WAY: [&str; 3] = ["false", "half", "true"];
const SIX_WAY: [&str; 6] = [
    "pants-fire",
    "false",
    "barely-true",
    "half-true",
    "mostly-true",
    "true",
];

/// Accepted spellings that resolve to a canonical label, per scheme.
const THREE_WAY_ALIASES: [(&str, usize); 1] = [("half-true", 1)];
const SIX_WAY_ALIASES: [(&str, usize); 1] = [("pants-on-fire", 0)];

#[derive(Debug, Clone, PartialEq, Eq)]
#[derive(thiserror::Error)]
pub enum LabelError {
    #[error("label `{label}` belongs to the {found} scheme, expected {expected}")]
    SchemeMismatch {
        label: &'static str,
        found: VeracityScheme,
        expected: VeracityScheme,
    },
    #[error("no {scheme} label found in `{text}`")]
    Unparseable { text: String, scheme: VeracityScheme },
    #[error("label index {index} out of range for the {scheme} scheme")]
    OutOfRange { index: usize, scheme: VeracityScheme },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VeracityScheme {
    ThreeWay,
    SixWay,
}

impl VeracityScheme {
    pub fn labels(self) -> &'static [&'static str] {
        match self {
            VeracityScheme::ThreeWay => &THREE_WAY,
            VeracityScheme::SixWay => &SIX_WAY,
        }
    }

    pub fn len(self) -> usize {
        self.labels().len()
    }

    pub fn is_empty(self) -> bool {
        false
    }

    pub fn all(self) -> impl Iterator<Item = VeracityLabel> {
        (0..self.len()).map(move |index| VeracityLabel { scheme: self, index: index as u8 })
    }

    pub fn label(self, index: usize) -> Result<VeracityLabel, LabelError> {
        if index < self.len() {
            Ok(VeracityLabel { scheme: self, index: index as u8 })
        } else {
            Err(LabelError::OutOfRange { index, scheme: self })
        }
    }

    /// Exact identifier (or accepted alias) lookup, no normalization beyond ASCII case.
    pub fn by_name(self, name: &str) -> Option<VeracityLabel> {
        let lower = name.trim().to_ascii_lowercase();
        self.vocabulary()
            .find(|(ident, _)| *ident == lower)
            .map(|(_, index)| VeracityLabel { scheme: self, index: index as u8 })
    }

    /// `{false, half, true}` as it appears in the inference query.
    pub fn label_set_text(self) -> String {
        let mut out = String::from("{");
        out.push_str(&self.labels().join(", "));
        out.push('}');
        out
    }

    fn vocabulary(self) -> impl Iterator<Item = (&'static str, usize)> {
        let aliases: &'static [(&'static str, usize)] = match self {
            VeracityScheme::ThreeWay => &THREE_WAY_ALIASES,
            VeracityScheme::SixWay => &SIX_WAY_ALIASES,
        };
        self.labels()
            .iter()
            .enumerate()
            .map(|(i, l)| (*l, i))
            .chain(aliases.iter().copied())
    }
}

impl fmt::Display for VeracityScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VeracityScheme::ThreeWay => "three_way",
            VeracityScheme::SixWay => "six_way",
        })
    }
}

/// A label is an ordinal position in its scheme's label list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VeracityLabel {
    scheme: VeracityScheme,
    index: u8,
}

impl VeracityLabel {
    pub fn scheme(self) -> VeracityScheme {
        self.scheme
    }

    pub fn index(self) -> usize {
        self.index as usize
    }

    pub fn name(self) -> &'static str {
        self.scheme.labels()[self.index()]
    }

    /// Numeric score used by the discrepancy metric: `{0, 2.5, 5}` for three
    /// labels, the ordinal `{0..5}` for six.
    pub fn score(self) -> f64 {
        match self.scheme {
            VeracityScheme::ThreeWay => 2.5 * self.index as f64,
            VeracityScheme::SixWay => self.index as f64,
        }
    }

    /// Collapse a six-way label onto the three-way scheme.
    pub fn to_three_way(self) -> Result<VeracityLabel, LabelError> {
        if self.scheme != VeracityScheme::SixWay {
            return Err(LabelError::SchemeMismatch {
                label: self.name(),
                found: self.scheme,
                expected: VeracityScheme::SixWay,
            });
        }
        let index = match self.index {
            0..=2 => 0,
            3 => 1,
            _ => 2,
        };
        Ok(VeracityLabel { scheme: VeracityScheme::ThreeWay, index })
    }

    /// True when the label sits at or above the midpoint of its scheme.
    pub fn leans_true(self) -> bool {
        self.score() >= 2.5
    }
}

impl fmt::Display for VeracityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn map_six_to_three(label: VeracityLabel) -> Result<VeracityLabel, LabelError> {
    label.to_three_way()
}

pub fn label_to_score(label: VeracityLabel) -> f64 {
    label.score()
}

/// Normalize free-form model output to a label of `scheme`.
///
/// The text is split into lowercase alphanumeric words (hyphens, spaces and
/// punctuation all separate words). A label matches when its words appear as a
/// contiguous run. A whole-text match wins outright; otherwise the label with
/// the most words (then the most characters) wins, earliest position breaking
/// ties. This keeps `"mostly-true"` from being read as `"true"`.
pub fn parse_label_string(text: &str, scheme: VeracityScheme) -> Result<VeracityLabel, LabelError> {
    let words = split_words(text);
    let mut best: Option<(usize, usize, usize, usize)> = None; // (word count, chars, -pos, index)
    for (ident, index) in scheme.vocabulary() {
        let label_words = split_words(ident);
        if label_words == words {
            return scheme.label(index);
        }
        if let Some(pos) = find_run(&words, &label_words) {
            let key = (label_words.len(), ident.len(), usize::MAX - pos, index);
            if best.is_none_or(|b| (key.0, key.1, key.2) > (b.0, b.1, b.2)) {
                best = Some(key);
            }
        }
    }
    match best {
        Some((_, _, _, index)) => scheme.label(index),
        None => Err(LabelError::Unparseable { text: String::from(text), scheme }),
    }
}

fn split_words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

fn find_run(haystack: &[String], needle: &[String]) -> Option<usize> {
    if needle.is_empty() || needle.len() > haystack.len() {
        return None;
    }
    haystack.windows(needle.len()).position(|w| w == needle)
}

#[derive(Serialize, Deserialize)]
struct LabelRepr {
    scheme: VeracityScheme,
    label: String,
}

impl Serialize for VeracityLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        LabelRepr { scheme: self.scheme, label: String::from(self.name()) }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for VeracityLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = LabelRepr::deserialize(deserializer)?;
        repr.scheme
            .by_name(&repr.label)
            .ok_or_else(|| serde::de::Error::custom(alloc::format!("unknown {} label `{}`", repr.scheme, repr.label)))
    }
}
