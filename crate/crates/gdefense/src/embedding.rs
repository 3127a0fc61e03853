//! HTTP client for a remote sentence encoder.
//!
//! Request body: `{"texts": [..]}`. The service answers either with pooled
//! vectors, `{"embeddings": [[..], ..]}`, or with per-token vectors,
//! `{"token_embeddings": [[[..], ..], ..]}`, which are mean-pooled here.

use std::time::Duration;

use gdefense_core::retrieval::{Embedder, RetrievalError};
use serde::Deserialize;
use serde_json::json;

use crate::gateway::RetryPolicy;

pub struct RemoteEmbedder {
    agent: ureq::Agent,
    endpoint: String,
    dimension: usize,
    retry: RetryPolicy,
}

#[derive(Deserialize)]
struct EmbedResponse {
    #[serde(default)]
    embeddings: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    token_embeddings: Option<Vec<Vec<Vec<f64>>>>,
}

enum Failure {
    Transient(String),
    Fatal(String),
}

fn mean_pool(tokens: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    if tokens.is_empty() {
        return out;
    }
    for t in tokens {
        for (o, x) in out.iter_mut().zip(t) {
            *o += x;
        }
    }
    let n = tokens.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

impl RemoteEmbedder {
    pub fn new(endpoint: impl Into<String>, dimension: usize, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        RemoteEmbedder { agent, endpoint: endpoint.into(), dimension, retry: RetryPolicy::default() }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn call(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, Failure> {
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .send_json(json!({ "texts": texts }))
            .map_err(|e| Failure::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(Failure::Transient(format!("HTTP {status}")));
        }
        if status >= 400 {
            return Err(Failure::Fatal(format!("HTTP {status}")));
        }
        let body: EmbedResponse = resp.body_mut().read_json().map_err(|e| Failure::Fatal(e.to_string()))?;
        let vectors = match (body.embeddings, body.token_embeddings) {
            (Some(v), _) => v,
            (None, Some(t)) => t.iter().map(|tok| mean_pool(tok, self.dimension)).collect(),
            (None, None) => return Err(Failure::Fatal("response has no embeddings".into())),
        };
        if vectors.len() != texts.len() {
            return Err(Failure::Fatal(format!("expected {} vectors, got {}", texts.len(), vectors.len())));
        }
        if let Some(v) = vectors.iter().find(|v| v.len() != self.dimension) {
            return Err(Failure::Fatal(format!("expected dimension {}, got {}", self.dimension, v.len())));
        }
        Ok(vectors)
    }
}

impl Embedder for RemoteEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, RetrievalError> {
        Ok(self.embed_batch(&[text])?.remove(0))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, RetrievalError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        self.retry.run(|| self.call(texts), |e| matches!(e, Failure::Transient(_))).map_err(|e| match e {
            Failure::Transient(m) | Failure::Fatal(m) => RetrievalError::Embedding(m),
        })
    }
}
