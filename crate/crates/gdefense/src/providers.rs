//! Provider implementations: fixture replay, recording, and an
//! OpenAI-compatible HTTP client.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write as _};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use gdefense_core::TokenUsage;
use serde::Deserialize;
use serde_json::json;

use crate::gateway::{ExchangeRecord, GenerationRequest, GenerationResponse, Provider, ProviderError};

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {source}")]
    Parse { path: PathBuf, line: usize, source: serde_json::Error },
}

/// Read every record in a fixture directory. `*.json` files hold one record,
/// `*.jsonl` files one record per line.
pub fn read_fixture_dir(dir: &Path) -> Result<Vec<ExchangeRecord>, FixtureError> {
    fn io(path: &Path) -> impl Fn(std::io::Error) -> FixtureError + '_ {
        move |source| FixtureError::Io { path: path.to_path_buf(), source }
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("json" | "jsonl")))
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for path in paths {
        let text = fs::read_to_string(&path).map_err(io(&path))?;
        if path.extension().is_some_and(|e| e == "jsonl") {
            for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let r = serde_json::from_str(line)
                    .map_err(|source| FixtureError::Parse { path: path.clone(), line: i + 1, source })?;
                out.push(r);
            }
        } else {
            let r = serde_json::from_str(&text).map_err(|source| FixtureError::Parse { path: path.clone(), line: 1, source })?;
            out.push(r);
        }
    }
    Ok(out)
}

/// Replays recorded exchanges keyed by request hash; anything else is a miss.
pub struct FixtureProvider {
    records: BTreeMap<String, ExchangeRecord>,
}

impl FixtureProvider {
    pub fn load(dir: &Path) -> Result<Self, FixtureError> {
        Ok(Self::from_records(read_fixture_dir(dir)?))
    }

    pub fn from_records(records: impl IntoIterator<Item = ExchangeRecord>) -> Self {
        FixtureProvider { records: records.into_iter().map(|r| (r.request_hash.clone(), r)).collect() }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Sum of token counts over all records.
    pub fn total_usage(&self) -> TokenUsage {
        self.records.values().fold(TokenUsage::default(), |acc, r| acc + TokenUsage::new(r.input_tokens, r.output_tokens))
    }
}

impl Provider for FixtureProvider {
    fn complete(&self, request: &GenerationRequest) -> Result<GenerationResponse, ProviderError> {
        let hash = request.hash();
        self.records.get(&hash).map(ExchangeRecord::response).ok_or(ProviderError::FixtureMiss(hash))
    }
}

/// Passes requests through and keeps every exchange for writing out as
/// fixtures.
pub struct RecordingProvider<P> {
    inner: P,
    seen: Mutex<BTreeMap<String, ExchangeRecord>>,
}

impl<P: Provider> RecordingProvider<P> {
    pub fn new(inner: P) -> Self {
        RecordingProvider { inner, seen: Mutex::default() }
    }

    pub fn records(&self) -> Vec<ExchangeRecord> {
        self.seen.lock().unwrap().values().cloned().collect()
    }
}

/// Write records sorted by hash to `<dir>/records.jsonl`, merging with any
/// records already there.
pub fn write_fixture_file(dir: &Path, records: &[ExchangeRecord]) -> std::io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join("records.jsonl");
    let mut all: BTreeMap<String, ExchangeRecord> = BTreeMap::new();
    if let Ok(f) = fs::File::open(&path) {
        for line in BufReader::new(f).lines() {
            if let Ok(r) = serde_json::from_str::<ExchangeRecord>(&line?) {
                all.insert(r.request_hash.clone(), r);
            }
        }
    }
    for r in records {
        all.insert(r.request_hash.clone(), r.clone());
    }
    let mut f = fs::File::create(&path)?;
    for r in all.values() {
        writeln!(f, "{}", serde_json::to_string(r).expect("record serializes"))?;
    }
    Ok(path)
}

impl<P: Provider> Provider for RecordingProvider<P> {
    fn complete(&self, request: &GenerationRequest) -> Result<GenerationResponse, ProviderError> {
        let resp = self.inner.complete(request)?;
        let record = ExchangeRecord::new(request, &resp);
        self.seen.lock().unwrap().insert(record.request_hash.clone(), record);
        Ok(resp)
    }
}

/// Chat-completions client for OpenAI-compatible endpoints.
pub struct HttpProvider {
    agent: ureq::Agent,
    base_url: String,
    api_key: Option<String>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<ChatUsage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChatUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

impl HttpProvider {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpProvider { agent, base_url: base_url.into().trim_end_matches('/').to_string(), api_key }
    }
}

impl Provider for HttpProvider {
    fn complete(&self, request: &GenerationRequest) -> Result<GenerationResponse, ProviderError> {
        let url = format!("{}/chat/completions", self.base_url);
        let body = json!({
            "model": request.model_id,
            "messages": [{"role": "user", "content": request.prompt_text}],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        });
        let mut req = self.agent.post(&url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| ProviderError::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(ProviderError::Transient(format!("HTTP {status}")));
        }
        if status >= 400 {
            let detail = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(ProviderError::Fatal(format!("HTTP {status}: {detail}")));
        }
        let parsed: ChatResponse =
            resp.body_mut().read_json().map_err(|e| ProviderError::Fatal(format!("bad response body: {e}")))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ProviderError::Fatal("response has no message content".into()))?;
        let usage = match parsed.usage {
            Some(u) => TokenUsage::new(u.prompt_tokens, u.completion_tokens),
            None => TokenUsage::new(
                crate::gateway::whitespace_tokens(&request.prompt_text),
                crate::gateway::whitespace_tokens(&text),
            ),
        };
        Ok(GenerationResponse { text, usage })
    }
}
