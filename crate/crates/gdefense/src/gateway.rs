//! Provider access: request hashing, retries, the on-disk cache, the in-flight
//! bound and token accounting.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::Duration;

use gdefense_core::llm::{Generator, LlmError, Stage};
use gdefense_core::{TokenLedger, TokenUsage};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    pub model_id: String,
    pub prompt_text: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    /// Distinguishes deliberate repeats of the same prompt (re-prompts), so a
    /// retry is not answered from the cache with the reply it is retrying.
    pub sample: u32,
}

impl GenerationRequest {
    /// Content address of the request: model, temperature (3 decimals),
    /// sample index and prompt text.
    pub fn hash(&self) -> String {
        request_hash(&self.model_id, self.temperature, self.sample, &self.prompt_text)
    }
}

pub fn request_hash(model_id: &str, temperature: f64, sample: u32, prompt: &str) -> String {
    let mut h = Sha256::new();
    h.update(model_id.as_bytes());
    h.update(b"\n");
    h.update(format!("{temperature:.3}").as_bytes());
    h.update(b"\n");
    h.update(sample.to_string().as_bytes());
    h.update(b"\n");
    h.update(prompt.as_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationResponse {
    pub text: String,
    pub usage: TokenUsage,
}

/// Token count used wherever no tokenizer is available.
pub fn whitespace_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProviderError {
    #[error("transient provider failure: {0}")]
    Transient(String),
    #[error("provider rejected the request: {0}")]
    Fatal(String),
    #[error("no fixture for request {0}")]
    FixtureMiss(String),
}

pub trait Provider: Send + Sync {
    fn complete(&self, request: &GenerationRequest) -> Result<GenerationResponse, ProviderError>;
}

impl<P: Provider + ?Sized> Provider for Arc<P> {
    fn complete(&self, request: &GenerationRequest) -> Result<GenerationResponse, ProviderError> {
        (**self).complete(request)
    }
}

impl<P: Provider + ?Sized> Provider for Box<P> {
    fn complete(&self, request: &GenerationRequest) -> Result<GenerationResponse, ProviderError> {
        (**self).complete(request)
    }
}

/// One stored request/response pair. Fixture directories and cache entries
/// share this layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeRecord {
    pub request_hash: String,
    pub model_id: String,
    pub temperature: f64,
    #[serde(default)]
    pub sample: u32,
    pub prompt_text: String,
    pub response_text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl ExchangeRecord {
    pub fn new(request: &GenerationRequest, response: &GenerationResponse) -> Self {
        ExchangeRecord {
            request_hash: request.hash(),
            model_id: request.model_id.clone(),
            temperature: request.temperature,
            sample: request.sample,
            prompt_text: request.prompt_text.clone(),
            response_text: response.text.clone(),
            input_tokens: response.usage.input_tokens,
            output_tokens: response.usage.output_tokens,
        }
    }

    pub fn response(&self) -> GenerationResponse {
        GenerationResponse {
            text: self.response_text.clone(),
            usage: TokenUsage::new(self.input_tokens, self.output_tokens),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { attempts: 3, base_delay: Duration::from_millis(500) }
    }
}

impl RetryPolicy {
    /// Run `op` until it succeeds, fails permanently, or attempts run out.
    /// Delays double after each transient failure.
    pub fn run<T, E>(&self, mut op: impl FnMut() -> Result<T, E>, is_transient: impl Fn(&E) -> bool) -> Result<T, E> {
        let mut delay = self.base_delay;
        let mut attempt = 1;
        loop {
            match op() {
                Err(e) if is_transient(&e) && attempt < self.attempts.max(1) => {
                    log::warn!("attempt {attempt} failed, retrying in {delay:?}");
                    thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

/// Content-addressed response store: `<dir>/<hash[..2]>/<hash>.json`.
#[derive(Debug, Clone)]
pub struct DiskCache {
    dir: PathBuf,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl DiskCache {
    pub fn open(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(DiskCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn entry_path(&self, hash: &str) -> PathBuf {
        self.dir.join(&hash[..2]).join(format!("{hash}.json"))
    }

    /// Stored response, if any. Unreadable or mismatched entries are deleted.
    pub fn get(&self, request: &GenerationRequest) -> Option<GenerationResponse> {
        let hash = request.hash();
        let path = self.entry_path(&hash);
        let bytes = fs::read(&path).ok()?;
        match serde_json::from_slice::<ExchangeRecord>(&bytes) {
            Ok(r) if r.request_hash == hash && r.prompt_text == request.prompt_text => Some(r.response()),
            _ => {
                log::warn!("evicting corrupt cache entry {}", path.display());
                let _ = fs::remove_file(&path);
                None
            }
        }
    }

    /// Write through a temporary file and rename, so readers never see a
    /// partial entry.
    pub fn put(&self, request: &GenerationRequest, response: &GenerationResponse) -> std::io::Result<()> {
        let record = ExchangeRecord::new(request, response);
        let path = self.entry_path(&record.request_hash);
        fs::create_dir_all(path.parent().expect("entry has a parent"))?;
        let tmp = path.with_extension(format!(
            "tmp{}-{}",
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&serde_json::to_vec_pretty(&record).expect("record serializes"))?;
        f.sync_all()?;
        drop(f);
        fs::rename(&tmp, &path)
    }
}

/// Counting semaphore bounding concurrent provider requests.
pub struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

pub struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    pub fn new(permits: usize) -> Self {
        Semaphore { free: Mutex::new(permits.max(1)), cv: Condvar::new() }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Temperatures {
    pub generation: f64,
    pub judge: f64,
}

impl Default for Temperatures {
    fn default() -> Self {
        Temperatures { generation: gdefense_core::llm::GENERATION_TEMPERATURE, judge: gdefense_core::llm::JUDGE_TEMPERATURE }
    }
}

pub struct GatewayOptions {
    pub model_id: String,
    pub max_output_tokens: u32,
    pub temperatures: Temperatures,
    pub retry: RetryPolicy,
    pub max_in_flight: usize,
}

impl Default for GatewayOptions {
    fn default() -> Self {
        GatewayOptions {
            model_id: String::from("gpt-3.5-turbo"),
            max_output_tokens: 1024,
            temperatures: Temperatures::default(),
            retry: RetryPolicy::default(),
            max_in_flight: 8,
        }
    }
}

pub struct Gateway {
    provider: Box<dyn Provider>,
    cache: Option<DiskCache>,
    options: GatewayOptions,
    slots: Semaphore,
    ledger: Mutex<TokenLedger>,
    provider_calls: AtomicU64,
    cache_hits: AtomicU64,
}

impl Gateway {
    pub fn new(provider: impl Provider + 'static, cache: Option<DiskCache>, options: GatewayOptions) -> Self {
        let slots = Semaphore::new(options.max_in_flight);
        Gateway {
            provider: Box::new(provider),
            cache,
            options,
            slots,
            ledger: Mutex::new(TokenLedger::new()),
            provider_calls: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
        }
    }

    pub fn options(&self) -> &GatewayOptions {
        &self.options
    }

    pub fn request(&self, stage: Stage, prompt: &str, sample: u32) -> GenerationRequest {
        let temperature = match stage {
            Stage::Judge => self.options.temperatures.judge,
            _ => self.options.temperatures.generation,
        };
        GenerationRequest {
            model_id: self.options.model_id.clone(),
            prompt_text: String::from(prompt),
            temperature,
            max_output_tokens: self.options.max_output_tokens,
            sample,
        }
    }

    /// Call the provider with retries and charge the usage to `stage`.
    pub fn complete(&self, stage: Stage, request: &GenerationRequest) -> Result<GenerationResponse, LlmError> {
        let _permit = self.slots.acquire();
        let result = self.options.retry.run(
            || {
                self.provider_calls.fetch_add(1, Ordering::Relaxed);
                self.provider.complete(request)
            },
            |e| matches!(e, ProviderError::Transient(_)),
        );
        match result {
            Ok(resp) => {
                self.ledger.lock().unwrap().record(stage, resp.usage);
                Ok(resp)
            }
            Err(ProviderError::Transient(e)) => Err(LlmError::Unavailable(e)),
            Err(e) => Err(LlmError::Provider(e.to_string())),
        }
    }

    /// Serve from the cache when possible; a hit costs no provider tokens.
    /// Returns the response and whether it came from the cache.
    pub fn cached_complete(
        &self,
        stage: Stage,
        request: &GenerationRequest,
    ) -> Result<(GenerationResponse, bool), LlmError> {
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.get(request) {
                self.cache_hits.fetch_add(1, Ordering::Relaxed);
                return Ok((hit, true));
            }
        }
        let resp = self.complete(stage, request)?;
        if let Some(cache) = &self.cache {
            if let Err(e) = cache.put(request, &resp) {
                log::warn!("cache write failed: {e}");
            }
        }
        Ok((resp, false))
    }

    pub fn ledger(&self) -> TokenLedger {
        self.ledger.lock().unwrap().clone()
    }

    /// Provider invocations so far, counting each retry attempt.
    pub fn provider_calls(&self) -> u64 {
        self.provider_calls.load(Ordering::Relaxed)
    }

    pub fn cache_hits(&self) -> u64 {
        self.cache_hits.load(Ordering::Relaxed)
    }

    pub fn session(&self) -> Session<'_> {
        Session { gateway: self, state: Mutex::default() }
    }
}

#[derive(Default)]
struct SessionState {
    ledger: TokenLedger,
    calls: BTreeMap<Stage, u32>,
    samples: HashMap<(Stage, String), u32>,
}

/// Per-claim view of a gateway: keeps that claim's own ledger and call counts.
pub struct Session<'g> {
    gateway: &'g Gateway,
    state: Mutex<SessionState>,
}

impl Session<'_> {
    pub fn ledger(&self) -> TokenLedger {
        self.state.lock().unwrap().ledger.clone()
    }

    /// Generation calls issued per stage, whether or not they hit the cache.
    pub fn calls(&self) -> BTreeMap<Stage, u32> {
        self.state.lock().unwrap().calls.clone()
    }
}

impl Generator for Session<'_> {
    fn generate(&self, stage: Stage, prompt: &str, _temperature: f64) -> Result<String, LlmError> {
        let sample = {
            let mut st = self.state.lock().unwrap();
            *st.calls.entry(stage).or_default() += 1;
            let n = st.samples.entry((stage, String::from(prompt))).or_default();
            let sample = *n;
            *n += 1;
            sample
        };
        let request = self.gateway.request(stage, prompt, sample);
        let (resp, cached) = self.gateway.cached_complete(stage, &request)?;
        // A cache hit still leaves a (zero) entry for the stage.
        let usage = if cached { TokenUsage::default() } else { resp.usage };
        self.state.lock().unwrap().ledger.record(stage, usage);
        Ok(resp.text)
    }
}
