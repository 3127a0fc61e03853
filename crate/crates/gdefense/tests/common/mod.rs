#![allow(dead_code)]

use std::path::{Path, PathBuf};

use gdefense::config::{Ablation, GraphVariant, PipelineConfig, PromptVariant, ProviderKind};
use gdefense::dataset::{load_dataset, DatasetManifest, LoadedDataset};
use gdefense::gateway::{DiskCache, Gateway};
use gdefense::pipeline::Pipeline;
use gdefense::providers::FixtureProvider;
use gdefense_core::inference::ClassifierAdapter;
use gdefense_core::{Embedder, HashingEmbedder, VeracityScheme};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn mini() -> LoadedDataset {
    let m = DatasetManifest::load(&fixtures().join("data/mini.toml")).expect("mini manifest");
    load_dataset(&m).expect("mini dataset")
}

pub const SCENARIOS: [&str; 6] = ["default", "no_subclaims", "no_edges", "no_evidence", "no_competing", "variants"];

/// The configuration each recorded scenario was captured with.
pub fn scenario(name: &str) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    match name {
        "default" => {}
        "no_subclaims" => cfg.ablations = [Ablation::NoSubclaims].into(),
        "no_edges" => cfg.ablations = [Ablation::NoEdges].into(),
        "no_evidence" => cfg.ablations = [Ablation::NoEvidence].into(),
        "no_competing" => cfg.ablations = [Ablation::NoCompeting].into(),
        "variants" => {
            cfg.graph_variant = GraphVariant::Hyper;
            cfg.background = true;
            cfg.prompt_variant = PromptVariant::DecompPlus;
        }
        other => panic!("unknown scenario {other}"),
    }
    cfg.provider.kind = ProviderKind::Fixtures;
    cfg.provider.fixtures = Some(fixtures().join("llm").join(name));
    cfg
}

pub fn fixture_provider(name: &str) -> FixtureProvider {
    FixtureProvider::load(&fixtures().join("llm").join(name)).expect("fixture records")
}

pub fn fixture_gateway(cfg: &PipelineConfig, scenario: &str, cache: Option<&Path>) -> Gateway {
    let cache = cache.map(|d| DiskCache::open(d).expect("cache dir"));
    Gateway::new(fixture_provider(scenario), cache, cfg.gateway_options())
}

pub fn embedder(cfg: &PipelineConfig) -> HashingEmbedder {
    HashingEmbedder::new(cfg.embedder.dimension)
}

pub fn pipeline<'a>(
    cfg: &'a PipelineConfig,
    gateway: &'a Gateway,
    embedder: &'a (dyn Embedder + Sync),
    adapter: Option<&'a (dyn ClassifierAdapter + Sync)>,
) -> Pipeline<'a> {
    Pipeline { config: cfg, gateway, embedder, adapter, scheme: VeracityScheme::ThreeWay }
}
