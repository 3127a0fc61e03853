//! Claims and the raw reports retrieved for them.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::label::VeracityLabel;
use crate::retrieval::split_report_sentences;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RecordError {
    #[error("claim text is empty")]
    EmptyClaim,
    #[error("report {0} has no sentences")]
    EmptyReport(usize),
    #[error("claim has no reports")]
    NoReports,
}

/// One raw report, already split into sentences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub index: usize,
    pub sentences: Vec<String>,
}

impl Report {
    pub fn from_text(index: usize, raw: &str) -> Result<Self, RecordError> {
        Self::from_sentences(index, split_report_sentences(raw))
    }

    /// Takes pre-split sentences; blank entries are dropped.
    pub fn from_sentences(index: usize, sentences: Vec<String>) -> Result<Self, RecordError> {
        let sentences: Vec<String> = sentences
            .into_iter()
            .map(|s| String::from(s.trim()))
            .filter(|s| !s.is_empty())
            .collect();
        if sentences.is_empty() {
            return Err(RecordError::EmptyReport(index));
        }
        Ok(Report { index, sentences })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimRecord {
    pub id: String,
    pub claim_text: String,
    pub gold_label: Option<VeracityLabel>,
    pub reports: Vec<Report>,
}

impl ClaimRecord {
    pub fn new(
        id: impl Into<String>,
        claim_text: impl Into<String>,
        gold_label: Option<VeracityLabel>,
        reports: Vec<Report>,
        allow_no_reports: bool,
    ) -> Result<Self, RecordError> {
        let claim_text: String = claim_text.into();
        if claim_text.trim().is_empty() {
            return Err(RecordError::EmptyClaim);
        }
        if reports.is_empty() && !allow_no_reports {
            return Err(RecordError::NoReports);
        }
        if let Some(r) = reports.iter().find(|r| r.sentences.is_empty()) {
            return Err(RecordError::EmptyReport(r.index));
        }
        Ok(ClaimRecord { id: id.into(), claim_text, gold_label, reports })
    }

    /// Candidate corpus size: the total sentence count over all reports.
    pub fn sentence_count(&self) -> usize {
        self.reports.iter().map(|r| r.sentences.len()).sum()
    }
}
