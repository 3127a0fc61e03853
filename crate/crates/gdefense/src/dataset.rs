//! Dataset manifests, loading, reject logs and summary statistics.
//!
//! A manifest is a TOML file next to (or pointing at) a JSON or JSONL file of
//! claim objects. The default field names are `id`, `claim`, `label` and
//! `reports`, where each report is either `{"content": "raw text"}`,
//! `{"sentences": [..]}` or a bare string. The `[fields]` table renames them.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use gdefense_core::record::{ClaimRecord, Report};
use gdefense_core::VeracityScheme;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Manifest { path: PathBuf, source: toml::de::Error },
    #[error("{path}: not a JSON array of claims: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Json,
    Jsonl,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldMap {
    pub id: String,
    pub claim: String,
    pub label: String,
    pub reports: String,
    pub content: String,
    pub sentences: String,
    pub date: String,
}

impl Default for FieldMap {
    fn default() -> Self {
        FieldMap {
            id: "id".into(),
            claim: "claim".into(),
            label: "label".into(),
            reports: "reports".into(),
            content: "content".into(),
            sentences: "sentences".into(),
            date: "date".into(),
        }
    }
}

/// Counts a manifest may pin; `ingest` reports any that differ.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedStats {
    pub claims: Option<usize>,
    pub labels: Option<BTreeMap<String, usize>>,
    pub reports: Option<usize>,
    pub sentences: Option<usize>,
    pub rejects: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub scheme: VeracityScheme,
    pub split: Split,
    /// Data file, relative to the manifest's directory.
    pub path: PathBuf,
    #[serde(default)]
    pub format: Option<DataFormat>,
    #[serde(default)]
    pub allow_empty_reports: bool,
    /// Reports dated after this ISO date (`YYYY-MM-DD`) are dropped.
    #[serde(default)]
    pub cutoff_date: Option<String>,
    #[serde(default)]
    pub fields: FieldMap,
    #[serde(default)]
    pub expected: ExpectedStats,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = fs::read_to_string(path).map_err(|source| DatasetError::Io { path: path.into(), source })?;
        let mut m: DatasetManifest =
            toml::from_str(&text).map_err(|source| DatasetError::Manifest { path: path.into(), source })?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    pub fn data_path(&self) -> PathBuf {
        self.base_dir.join(&self.path)
    }

    fn format(&self) -> DataFormat {
        self.format.unwrap_or(match self.path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") => DataFormat::Jsonl,
            _ => DataFormat::Json,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    /// Zero-based position of the source object in the data file.
    pub position: usize,
    pub id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub manifest: DatasetManifest,
    pub records: Vec<ClaimRecord>,
    pub rejects: Vec<Reject>,
}

fn text_field(obj: &Value, key: &str) -> Option<String> {
    match obj.get(key)? {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn parse_report(index: usize, value: &Value, m: &DatasetManifest) -> Result<Option<Report>, String> {
    if let (Some(cutoff), Some(date)) = (&m.cutoff_date, text_field(value, &m.fields.date)) {
        if date.as_str() > cutoff.as_str() {
            return Ok(None);
        }
    }
    let built = match value {
        Value::String(s) => Report::from_text(index, s),
        Value::Object(_) => {
            if let Some(Value::Array(items)) = value.get(&m.fields.sentences) {
                let sentences = items
                    .iter()
                    .map(|s| s.as_str().map(str::to_string).ok_or_else(|| format!("report {index}: sentence is not a string")))
                    .collect::<Result<Vec<_>, _>>()?;
                Report::from_sentences(index, sentences)
            } else if let Some(content) = text_field(value, &m.fields.content) {
                Report::from_text(index, &content)
            } else {
                return Err(format!("report {index}: neither `{}` nor `{}`", m.fields.content, m.fields.sentences));
            }
        }
        _ => return Err(format!("report {index}: unsupported shape")),
    };
    built.map(Some).map_err(|e| e.to_string())
}

fn parse_record(obj: &Value, m: &DatasetManifest) -> Result<ClaimRecord, String> {
    let f = &m.fields;
    let id = text_field(obj, &f.id).ok_or_else(|| format!("missing `{}`", f.id))?;
    let claim = text_field(obj, &f.claim).ok_or_else(|| format!("missing `{}`", f.claim))?;
    let label_text = text_field(obj, &f.label).ok_or_else(|| format!("missing `{}`", f.label))?;
    let label = m
        .scheme
        .by_name(&label_text)
        .ok_or_else(|| format!("unknown {} label `{label_text}`", m.scheme))?;
    let raw_reports = match obj.get(&f.reports) {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(a)) => a.clone(),
        Some(_) => return Err(format!("`{}` is not a list", f.reports)),
    };
    let mut reports = Vec::new();
    for r in &raw_reports {
        // Indices are dense over the kept reports.
        if let Some(rep) = parse_report(reports.len(), r, m)? {
            reports.push(rep);
        }
    }
    ClaimRecord::new(id, claim, Some(label), reports, m.allow_empty_reports).map_err(|e| e.to_string())
}

/// Load and validate every record. Invalid records go to `rejects`.
pub fn load_dataset(manifest: &DatasetManifest) -> Result<LoadedDataset, DatasetError> {
    let path = manifest.data_path();
    let text = fs::read_to_string(&path).map_err(|source| DatasetError::Io { path: path.clone(), source })?;
    let mut rejects = Vec::new();
    let values: Vec<Result<Value, String>> = match manifest.format() {
        DataFormat::Json => serde_json::from_str::<Vec<Value>>(&text)
            .map_err(|source| DatasetError::Json { path: path.clone(), source })?
            .into_iter()
            .map(Ok)
            .collect(),
        DataFormat::Jsonl => text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| format!("invalid JSON: {e}")))
            .collect(),
    };
    let mut records = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (position, v) in values.into_iter().enumerate() {
        let id = v.as_ref().ok().and_then(|o| text_field(o, &manifest.fields.id));
        let parsed = v.and_then(|o| parse_record(&o, manifest)).and_then(|r| {
            if seen.insert(r.id.clone()) {
                Ok(r)
            } else {
                Err(format!("duplicate id `{}`", r.id))
            }
        });
        match parsed {
            Ok(r) => records.push(r),
            Err(reason) => {
                log::warn!("rejected record {position}: {reason}");
                rejects.push(Reject { position, id, reason });
            }
        }
    }
    Ok(LoadedDataset { manifest: manifest.clone(), records, rejects })
}

/// One JSON object per line.
pub fn write_reject_log(path: &Path, rejects: &[Reject]) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut f = fs::File::create(path)?;
    for r in rejects {
        writeln!(f, "{}", serde_json::to_string(r).expect("reject serializes"))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub min: usize,
    pub max: usize,
    pub avg: f64,
}

impl Spread {
    fn of(values: impl IntoIterator<Item = usize>) -> Self {
        let (mut min, mut max, mut sum, mut n) = (usize::MAX, 0, 0usize, 0usize);
        for v in values {
            min = min.min(v);
            max = max.max(v);
            sum += v;
            n += 1;
        }
        if n == 0 {
            return Spread::default();
        }
        Spread { min, max, avg: sum as f64 / n as f64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub claims: usize,
    /// In scheme order.
    pub labels: Vec<(String, usize)>,
    pub reports: usize,
    pub sentences: usize,
    pub reports_per_claim: Spread,
    pub sentences_per_report: Spread,
}

pub fn dataset_stats(scheme: VeracityScheme, records: &[ClaimRecord]) -> DatasetStats {
    let mut counts = vec![0usize; scheme.len()];
    for r in records {
        if let Some(l) = r.gold_label.filter(|l| l.scheme() == scheme) {
            counts[l.index()] += 1;
        }
    }
    let per_report: Vec<usize> = records.iter().flat_map(|r| r.reports.iter().map(|p| p.sentences.len())).collect();
    DatasetStats {
        claims: records.len(),
        labels: scheme.labels().iter().map(|l| l.to_string()).zip(counts).collect(),
        reports: records.iter().map(|r| r.reports.len()).sum(),
        sentences: per_report.iter().sum(),
        reports_per_claim: Spread::of(records.iter().map(|r| r.reports.len())),
        sentences_per_report: Spread::of(per_report),
    }
}

impl DatasetStats {
    /// Differences from the pinned counts, one message each.
    pub fn mismatches(&self, expected: &ExpectedStats, rejects: usize) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |what: &str, want: Option<usize>, got: usize| {
            if let Some(w) = want.filter(|w| *w != got) {
                out.push(format!("{what}: expected {w}, found {got}"));
            }
        };
        check("claims", expected.claims, self.claims);
        check("reports", expected.reports, self.reports);
        check("sentences", expected.sentences, self.sentences);
        check("rejects", expected.rejects, rejects);
        if let Some(labels) = &expected.labels {
            for (name, got) in &self.labels {
                check(&format!("label {name}"), Some(labels.get(name).copied().unwrap_or(0)), *got);
            }
            for name in labels.keys().filter(|k| !self.labels.iter().any(|(n, _)| n == *k)) {
                out.push(format!("label {name}: not in the scheme"));
            }
        }
        out
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("{:<22}{}\n", "claims", self.claims));
        for (name, n) in &self.labels {
            s.push_str(&format!("{:<22}{}\n", format!("# {name}"), n));
        }
        let spread = |name: &str, sp: &Spread| format!("{name:<22}min {}  max {}  avg {:.1}\n", sp.min, sp.max, sp.avg);
        s.push_str(&spread("reports per claim", &self.reports_per_claim));
        s.push_str(&spread("sentences per report", &self.sentences_per_report));
        s
    }
}
