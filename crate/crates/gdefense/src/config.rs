//! Run configuration: TOML file, command-line overrides and environment
//! secrets, plus construction of the providers it names.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context as _};
use gdefense_core::graph::DecompositionPrompt;
use gdefense_core::inference::ClassifierAdapter;
use gdefense_core::retrieval::{Embedder, HashingEmbedder, DEFAULT_K};
use gdefense_core::Pricing;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adapter::{HttpAdapter, StdioAdapter};
use crate::embedding::RemoteEmbedder;
use crate::gateway::{DiskCache, Gateway, GatewayOptions, Provider, Temperatures};
use crate::providers::{FixtureProvider, HttpProvider, RecordingProvider};
use crate::synthetic::SyntheticProvider;

pub const ENV_API_KEY: &str = "GDEFENSE_API_KEY";
pub const ENV_API_BASE: &str = "GDEFENSE_API_BASE";
pub const ENV_MODEL: &str = "GDEFENSE_MODEL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PromptVariant {
    #[default]
    Standard,
    #[value(alias = "decomp_plus")]
    DecompPlus,
}

impl From<PromptVariant> for DecompositionPrompt {
    fn from(v: PromptVariant) -> Self {
        match v {
            PromptVariant::Standard => DecompositionPrompt::Standard,
            PromptVariant::DecompPlus => DecompositionPrompt::DecompPlus,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum GraphVariant {
    #[default]
    Dependency,
    Hyper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[value(alias = "no_subclaims")]
    NoSubclaims,
    #[value(alias = "no_edges")]
    NoEdges,
    #[value(alias = "no_evidence")]
    NoEvidence,
    #[value(alias = "no_competing")]
    NoCompeting,
    #[value(alias = "no_inference_training")]
    NoInferenceTraining,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum InferencePath {
    #[default]
    #[value(alias = "zero_shot")]
    ZeroShot,
    #[value(alias = "external_adapter")]
    ExternalAdapter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    Http,
    Fixtures,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub base_url: String,
    /// Usually left unset and taken from the environment.
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub fixtures: Option<PathBuf>,
    pub timeout_secs: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            kind: ProviderKind::Http,
            base_url: "https://api.openai.com/v1".into(),
            api_key: None,
            fixtures: None,
            timeout_secs: 120,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    #[default]
    Hashing,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedderConfig {
    pub kind: EmbedderKind,
    pub endpoint: Option<String>,
    pub dimension: usize,
    pub timeout_secs: u64,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig { kind: EmbedderKind::Hashing, endpoint: None, dimension: 256, timeout_secs: 60 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdapterConfig {
    Http { endpoint: String },
    Stdio { command: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub model: String,
    pub k: usize,
    pub prompt_variant: PromptVariant,
    pub graph_variant: GraphVariant,
    pub background: bool,
    pub ablations: BTreeSet<Ablation>,
    pub inference_path: InferencePath,
    pub max_output_tokens: u32,
    pub temperatures: Temperatures,
    pub pricing: Pricing,
    pub provider: ProviderConfig,
    pub embedder: EmbedderConfig,
    pub adapter: Option<AdapterConfig>,
    pub cache_dir: Option<PathBuf>,
    pub claims_in_flight: usize,
    pub max_in_flight: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            model: "gpt-3.5-turbo".into(),
            k: DEFAULT_K,
            prompt_variant: PromptVariant::default(),
            graph_variant: GraphVariant::default(),
            background: false,
            ablations: BTreeSet::new(),
            inference_path: InferencePath::default(),
            max_output_tokens: 1024,
            temperatures: Temperatures::default(),
            pricing: Pricing::DEFAULT,
            provider: ProviderConfig::default(),
            embedder: EmbedderConfig::default(),
            adapter: None,
            cache_dir: None,
            claims_in_flight: 4,
            max_in_flight: 8,
        }
    }
}

pub type Recorder = std::sync::Arc<RecordingProvider<Box<dyn Provider>>>;

/// The settings that change what a run produces. Hashed into the run
/// directory name.
#[derive(Serialize)]
struct Fingerprint<'a> {
    dataset: &'a str,
    model: &'a str,
    k: usize,
    prompt_variant: PromptVariant,
    graph_variant: GraphVariant,
    background: bool,
    ablations: &'a BTreeSet<Ablation>,
    inference_path: InferencePath,
    max_output_tokens: u32,
    temperatures: Temperatures,
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: PipelineConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(f) = &cfg.provider.fixtures {
            cfg.provider.fixtures = Some(base.join(f));
        }
        if let Some(c) = &cfg.cache_dir {
            cfg.cache_dir = Some(base.join(c));
        }
        Ok(cfg)
    }

    /// Fill secrets and endpoint overrides from the environment.
    pub fn apply_env(&mut self) {
        self.apply_env_from(|k| std::env::var(k).ok());
    }

    pub fn apply_env_from(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(key) = get(ENV_API_KEY).filter(|k| !k.is_empty()) {
            self.provider.api_key = Some(key);
        }
        if let Some(base) = get(ENV_API_BASE).filter(|k| !k.is_empty()) {
            self.provider.base_url = base;
        }
        if let Some(model) = get(ENV_MODEL).filter(|k| !k.is_empty()) {
            self.model = model;
        }
    }

    pub fn has(&self, a: Ablation) -> bool {
        self.ablations.contains(&a)
    }

    /// Apply the implications between settings: without sub-claims there is
    /// no graph to vary, and without a trained classifier inference is
    /// zero-shot.
    pub fn normalized(mut self) -> Self {
        if self.has(Ablation::NoSubclaims) {
            self.graph_variant = GraphVariant::Dependency;
        }
        if self.has(Ablation::NoInferenceTraining) {
            self.inference_path = InferencePath::ZeroShot;
        }
        self
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.k == 0 {
            bail!("k must be at least 1");
        }
        if self.claims_in_flight == 0 || self.max_in_flight == 0 {
            bail!("concurrency limits must be at least 1");
        }
        if self.inference_path == InferencePath::ExternalAdapter && self.adapter.is_none() {
            bail!("inference_path = external_adapter needs an [adapter] section");
        }
        if self.provider.kind == ProviderKind::Fixtures && self.provider.fixtures.is_none() {
            bail!("provider.kind = fixtures needs provider.fixtures");
        }
        if self.embedder.kind == EmbedderKind::Remote && self.embedder.endpoint.is_none() {
            bail!("embedder.kind = remote needs embedder.endpoint");
        }
        Ok(())
    }

    /// Short hash of everything that affects run outputs.
    pub fn fingerprint(&self, dataset: &str) -> String {
        let f = Fingerprint {
            dataset,
            model: &self.model,
            k: self.k,
            prompt_variant: self.prompt_variant,
            graph_variant: self.graph_variant,
            background: self.background,
            ablations: &self.ablations,
            inference_path: self.inference_path,
            max_output_tokens: self.max_output_tokens,
            temperatures: self.temperatures,
        };
        let json = serde_json::to_string(&f).expect("fingerprint serializes");
        hex::encode(Sha256::digest(json.as_bytes()))[..12].to_string()
    }

    pub fn gateway_options(&self) -> GatewayOptions {
        GatewayOptions {
            model_id: self.model.clone(),
            max_output_tokens: self.max_output_tokens,
            temperatures: self.temperatures,
            max_in_flight: self.max_in_flight,
            ..GatewayOptions::default()
        }
    }

    pub fn build_provider(&self) -> anyhow::Result<Box<dyn Provider>> {
        Ok(match self.provider.kind {
            ProviderKind::Http => Box::new(HttpProvider::new(
                &self.provider.base_url,
                self.provider.api_key.clone(),
                Duration::from_secs(self.provider.timeout_secs),
            )),
            ProviderKind::Fixtures => {
                let dir = self.provider.fixtures.as_ref().context("provider.fixtures is not set")?;
                Box::new(FixtureProvider::load(dir)?)
            }
            ProviderKind::Synthetic => Box::new(SyntheticProvider),
        })
    }

    pub fn build_cache(&self) -> anyhow::Result<Option<DiskCache>> {
        self.cache_dir
            .as_ref()
            .map(|d| DiskCache::open(d).with_context(|| format!("opening cache {}", d.display())))
            .transpose()
    }

    pub fn build_gateway(&self) -> anyhow::Result<Gateway> {
        Ok(Gateway::new(self.build_provider()?, self.build_cache()?, self.gateway_options()))
    }

    /// A gateway whose provider keeps every exchange for fixture recording.
    pub fn build_recording_gateway(&self) -> anyhow::Result<(Gateway, Recorder)> {
        let rec = std::sync::Arc::new(RecordingProvider::new(self.build_provider()?));
        Ok((Gateway::new(rec.clone(), self.build_cache()?, self.gateway_options()), rec))
    }

    pub fn build_embedder(&self) -> anyhow::Result<Box<dyn Embedder + Send + Sync>> {
        Ok(match self.embedder.kind {
            EmbedderKind::Hashing => Box::new(HashingEmbedder::new(self.embedder.dimension)),
            EmbedderKind::Remote => Box::new(RemoteEmbedder::new(
                self.embedder.endpoint.clone().context("embedder.endpoint is not set")?,
                self.embedder.dimension,
                Duration::from_secs(self.embedder.timeout_secs),
            )),
        })
    }

    pub fn build_adapter(&self) -> anyhow::Result<Option<Box<dyn ClassifierAdapter + Send + Sync>>> {
        if self.inference_path != InferencePath::ExternalAdapter {
            return Ok(None);
        }
        Ok(Some(match self.adapter.as_ref().context("no [adapter] configured")? {
            AdapterConfig::Http { endpoint } => Box::new(HttpAdapter::new(endpoint, Duration::from_secs(60))),
            AdapterConfig::Stdio { command } => {
                let (program, args) = command.split_first().context("adapter command is empty")?;
                Box::new(StdioAdapter::new(program, args.to_vec()))
            }
        }))
    }
}
