//! Per-claim orchestration and resumable batch runs.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::Context as _;
use gdefense_core::explain::{generate_background, generate_competing_pair, generate_single_analysis};
use gdefense_core::graph::{decompose_claim, generate_edges, generate_hyperedges};
use gdefense_core::inference::{
    build_inference_prompt, graph_to_seq, hypergraph_to_seq, predict_external, predict_zero_shot, ClassifierAdapter,
};
use gdefense_core::retrieval::{retrieve_for_text, Corpus, EvidenceSet, BACKGROUND_K};
use gdefense_core::summary::{build_explanation_graph, export_structured, summarize};
use gdefense_core::{
    ClaimCenteredGraph, ClaimRecord, CompetingExplanations, DefenseGraph, Embedder, HyperGraph, PredictionResult, Stage,
    TokenLedger, VeracityLabel, VeracityScheme,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Ablation, GraphVariant, InferencePath, PipelineConfig};
use crate::gateway::{Gateway, Session};

/// Wall-clock seconds per latency component. Retrieval and explanation time
/// are totals over all units of the claim.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageDurations {
    pub decomposition: Option<f64>,
    pub relation: Option<f64>,
    pub retrieval: Option<f64>,
    pub competing: Option<f64>,
    pub prediction: Option<f64>,
    pub final_explanation: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// Every step produced its output.
    Completed,
    /// A label was predicted but the summary step failed.
    Partial,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id: String,
    pub claim: String,
    pub gold_label: Option<VeracityLabel>,
    pub status: RunStatus,
    /// Stage that failed, for failed and partial records.
    pub failed_stage: Option<String>,
    pub error: Option<String>,
    /// Number of sub-claims; 0 when the claim is handled as a single node.
    pub n: usize,
    pub graph: Option<ClaimCenteredGraph>,
    pub hypergraph: Option<HyperGraph>,
    /// Structure text given to inference; absent when that section is removed.
    pub structure: Option<String>,
    pub explanations: Vec<CompetingExplanations>,
    pub inference_prompt: Option<String>,
    pub prediction: Option<PredictionResult>,
    /// Structured explanation graph export.
    pub explanation_graph: Option<serde_json::Value>,
    pub summary: Option<String>,
    pub usage: TokenLedger,
    pub calls: BTreeMap<Stage, u32>,
    pub durations: StageDurations,
    /// Steps in execution order.
    pub trace: Vec<String>,
    pub warnings: Vec<String>,
}

impl RunRecord {
    fn new(record: &ClaimRecord) -> Self {
        RunRecord {
            id: record.id.clone(),
            claim: record.claim_text.clone(),
            gold_label: record.gold_label,
            status: RunStatus::Failed,
            failed_stage: None,
            error: None,
            n: 0,
            graph: None,
            hypergraph: None,
            structure: None,
            explanations: Vec::new(),
            inference_prompt: None,
            prediction: None,
            explanation_graph: None,
            summary: None,
            usage: TokenLedger::new(),
            calls: BTreeMap::new(),
            durations: StageDurations::default(),
            trace: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn predicted(&self) -> Option<VeracityLabel> {
        self.prediction.as_ref().map(|p| p.label)
    }

    pub fn explanation_count(&self) -> usize {
        self.explanations.iter().map(CompetingExplanations::count).sum()
    }
}

struct StageFailure {
    stage: &'static str,
    error: String,
}

fn fail(stage: &'static str) -> impl FnOnce(String) -> StageFailure {
    move |error| StageFailure { stage, error }
}

fn timed<T>(slot: &mut Option<f64>, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    *slot = Some(slot.unwrap_or(0.0) + start.elapsed().as_secs_f64());
    out
}

/// Everything a claim run needs besides the claim.
pub struct Pipeline<'a> {
    pub config: &'a PipelineConfig,
    pub gateway: &'a Gateway,
    pub embedder: &'a (dyn Embedder + Sync),
    pub adapter: Option<&'a (dyn ClassifierAdapter + Sync)>,
    pub scheme: VeracityScheme,
}

impl Pipeline<'_> {
    /// Run all steps for one claim. Failures before a label exists mark the
    /// record failed; a summary failure leaves it partial.
    pub fn run_claim(&self, record: &ClaimRecord) -> RunRecord {
        let session = self.gateway.session();
        let mut out = RunRecord::new(record);
        let result = self.stages(record, &session, &mut out);
        out.usage = session.ledger();
        out.calls = session.calls();
        if let Err(f) = result {
            log::warn!("claim {}: {} failed: {}", record.id, f.stage, f.error);
            out.failed_stage = Some(f.stage.to_string());
            out.error = Some(f.error);
            if out.prediction.is_some() {
                out.status = RunStatus::Partial;
            }
        } else {
            out.status = RunStatus::Completed;
        }
        out
    }

    fn stages(&self, record: &ClaimRecord, session: &Session<'_>, out: &mut RunRecord) -> Result<(), StageFailure> {
        let cfg = self.config;
        let claim = record.claim_text.as_str();

        // Graph construction.
        let (graph, structure) = if cfg.has(Ablation::NoSubclaims) {
            out.trace.push("graph:claim_only".into());
            (ClaimCenteredGraph::claim_only(claim), None)
        } else {
            out.trace.push("decompose".into());
            let subs = timed(&mut out.durations.decomposition, || {
                decompose_claim(session, claim, cfg.prompt_variant.into())
            })
            .map_err(|e| e.to_string())
            .map_err(fail("claim_decomposition"))?;
            if cfg.has(Ablation::NoEdges) {
                let g = ClaimCenteredGraph::assemble(claim, subs, &[]).map_err(|e| e.to_string()).map_err(fail("edge_generation"))?;
                (g, None)
            } else if cfg.graph_variant == GraphVariant::Hyper {
                out.trace.push("hyperedges".into());
                let (hg, warnings) = timed(&mut out.durations.relation, || generate_hyperedges(session, claim, &subs))
                    .map_err(|e| e.to_string())
                    .map_err(fail("edge_generation"))?;
                out.warnings.extend(warnings);
                let structure = hypergraph_to_seq(&hg).text;
                out.hypergraph = Some(hg);
                let g = ClaimCenteredGraph::assemble(claim, subs, &[]).map_err(|e| e.to_string()).map_err(fail("edge_generation"))?;
                (g, Some(structure))
            } else {
                out.trace.push("edges".into());
                let eg = timed(&mut out.durations.relation, || generate_edges(session, claim, &subs))
                    .map_err(|e| e.to_string())
                    .map_err(fail("edge_generation"))?;
                out.warnings.extend(eg.warnings);
                let g = ClaimCenteredGraph::assemble(claim, subs, &eg.edges)
                    .map_err(|e| e.to_string())
                    .map_err(fail("edge_generation"))?;
                let s = graph_to_seq(&g).text;
                (g, Some(s))
            }
        };
        out.n = graph.n();
        out.graph = Some(graph.clone());
        out.structure = structure.clone();

        // Evidence and explanations, one unit at a time.
        let mut corpus = Corpus::from_reports(&record.reports);
        let needs_corpus = !cfg.has(Ablation::NoEvidence) || cfg.background;
        if needs_corpus && !corpus.is_empty() {
            timed(&mut out.durations.retrieval, || corpus.embed_with(&self.embedder))
                .map_err(|e| e.to_string())
                .map_err(fail("evidence_retrieval"))?;
        }
        let mut explanations = Vec::new();
        for unit in graph.units() {
            let text = graph.node_text(unit).expect("unit node exists").to_string();
            let evidence = if cfg.has(Ablation::NoEvidence) {
                EvidenceSet::empty(unit, cfg.k)
            } else if corpus.is_empty() {
                out.warnings.push(format!("node {unit}: no candidate sentences, explaining without evidence"));
                EvidenceSet::empty(unit, cfg.k)
            } else {
                out.trace.push(format!("retrieve:{unit}"));
                timed(&mut out.durations.retrieval, || retrieve_for_text(&self.embedder, unit, &text, &corpus, cfg.k))
                    .map_err(|e| e.to_string())
                    .map_err(fail("evidence_retrieval"))?
            };
            let mut ex = if cfg.has(Ablation::NoCompeting) {
                out.trace.push(format!("explain_single:{unit}"));
                timed(&mut out.durations.competing, || generate_single_analysis(session, unit, &text, evidence))
            } else {
                out.trace.push(format!("explain_pair:{unit}"));
                timed(&mut out.durations.competing, || generate_competing_pair(session, unit, &text, evidence))
            }
            .map_err(|e| e.to_string())
            .map_err(fail("explanation_generation"))?;
            if cfg.background {
                let related = if corpus.is_empty() {
                    EvidenceSet::empty(unit, BACKGROUND_K)
                } else {
                    timed(&mut out.durations.retrieval, || {
                        retrieve_for_text(&self.embedder, unit, &text, &corpus, BACKGROUND_K)
                    })
                    .map_err(|e| e.to_string())
                    .map_err(fail("evidence_retrieval"))?
                };
                out.trace.push(format!("background:{unit}"));
                let bg = timed(&mut out.durations.competing, || generate_background(session, unit, &text, &related))
                    .map_err(|e| e.to_string())
                    .map_err(fail("explanation_generation"))?;
                ex.background = Some(bg);
            }
            explanations.push(ex);
        }
        out.explanations = explanations.clone();

        // Inference.
        let dg = DefenseGraph::new(graph, explanations).map_err(|e| e.to_string()).map_err(fail("inference"))?;
        let prompt = build_inference_prompt(&dg, self.scheme, structure.as_deref());
        out.inference_prompt = Some(prompt.clone());
        let path = if cfg.has(Ablation::NoInferenceTraining) { InferencePath::ZeroShot } else { cfg.inference_path };
        let prediction = match (path, self.adapter) {
            (InferencePath::ExternalAdapter, Some(adapter)) => {
                out.trace.push("infer:external".into());
                timed(&mut out.durations.prediction, || predict_external(&adapter, &prompt, self.scheme))
            }
            (InferencePath::ExternalAdapter, None) => {
                return Err(StageFailure { stage: "inference", error: "no classifier adapter configured".into() })
            }
            (InferencePath::ZeroShot, _) => {
                out.trace.push("infer:zero_shot".into());
                timed(&mut out.durations.prediction, || predict_zero_shot(session, &prompt, self.scheme))
            }
        }
        .map_err(|e| e.to_string())
        .map_err(fail("inference"))?;
        let label = prediction.label;
        out.prediction = Some(prediction);

        // Summary and explanation graph.
        out.trace.push("summarize".into());
        let outcome = timed(&mut out.durations.final_explanation, || summarize(session, &dg, label, structure.as_deref()))
            .map_err(|e| e.to_string())
            .map_err(fail("final_explanation_generation"))?;
        let fallbacks: Vec<usize> = outcome.verdicts.iter().filter(|v| v.fallback).map(|v| v.sub_claim_index).collect();
        if !fallbacks.is_empty() {
            out.warnings.push(format!("verdicts defaulted to the claim label for nodes {fallbacks:?}"));
        }
        out.summary = Some(outcome.summary.clone());
        let eg = build_explanation_graph(&dg, outcome.verdicts, outcome.summary, label)
            .map_err(|e| e.to_string())
            .map_err(fail("final_explanation_generation"))?;
        let structured = serde_json::from_str(&export_structured(&eg)).expect("structured export is JSON");
        out.explanation_graph = Some(structured);
        Ok(())
    }
}

/// File-system-safe record name; ids that needed changes get a hash suffix so
/// distinct ids never collide.
pub fn record_file_name(id: &str) -> String {
    let clean: String =
        id.chars().map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' }).collect();
    let clean = clean.trim_start_matches('.').to_string();
    if clean == id && !clean.is_empty() {
        format!("{clean}.json")
    } else {
        let h = hex::encode(Sha256::digest(id.as_bytes()));
        format!("{clean}-{}.json", &h[..8])
    }
}

/// Run metadata stored as `run.json` in the run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub dataset: String,
    pub scheme: VeracityScheme,
    pub fingerprint: String,
    pub config: PipelineConfig,
}

pub const RUN_INFO: &str = "run.json";
pub const RECORDS_DIR: &str = "records";

pub fn run_dir_name(fingerprint: &str) -> String {
    format!("run-{fingerprint}")
}

fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, contents)?;
    fs::rename(tmp, path)
}

pub fn read_run_info(run_dir: &Path) -> anyhow::Result<RunInfo> {
    let path = run_dir.join(RUN_INFO);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// All run records in a run directory, sorted by claim id. Unreadable files
/// are skipped with a warning.
pub fn read_run_records(run_dir: &Path) -> anyhow::Result<Vec<RunRecord>> {
    let dir = run_dir.join(RECORDS_DIR);
    let entries = fs::read_dir(&dir).with_context(|| format!("reading {}", dir.display()))?;
    let mut out = Vec::new();
    for e in entries {
        let path = e?.path();
        if path.extension().is_none_or(|x| x != "json") {
            continue;
        }
        match fs::read_to_string(&path).map_err(anyhow::Error::from).and_then(|t| Ok(serde_json::from_str(&t)?)) {
            Ok(r) => out.push(r),
            Err(e) => log::warn!("skipping {}: {e}", path.display()),
        }
    }
    out.sort_by(|a: &RunRecord, b| a.id.cmp(&b.id));
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct BatchOutcome {
    pub run_dir: PathBuf,
    pub processed: usize,
    pub skipped: usize,
    pub failed: usize,
}

pub struct BatchOptions {
    /// Stop after this many newly processed claims.
    pub limit: Option<usize>,
}

impl<'a> Pipeline<'a> {
    /// Run every claim not already completed in `<out_root>/run-<fingerprint>`.
    /// Failed records are retried on the next run; completed and partial ones
    /// are kept.
    pub fn run_batch(
        &self,
        dataset: &str,
        records: &[ClaimRecord],
        out_root: &Path,
        options: &BatchOptions,
    ) -> anyhow::Result<BatchOutcome> {
        let fingerprint = self.config.fingerprint(dataset);
        let run_dir = out_root.join(run_dir_name(&fingerprint));
        let rec_dir = run_dir.join(RECORDS_DIR);
        fs::create_dir_all(&rec_dir).with_context(|| format!("creating {}", rec_dir.display()))?;
        let info = RunInfo { dataset: dataset.into(), scheme: self.scheme, fingerprint, config: self.config.clone() };
        write_atomic(&run_dir.join(RUN_INFO), serde_json::to_string_pretty(&info)?.as_bytes())?;

        let done: BTreeSet<String> = read_run_records(&run_dir)?
            .into_iter()
            .filter(|r| r.status != RunStatus::Failed)
            .map(|r| r.id)
            .collect();
        let todo: Vec<&ClaimRecord> = records.iter().filter(|r| !done.contains(&r.id)).collect();
        let skipped = records.len() - todo.len();
        let todo = &todo[..options.limit.map_or(todo.len(), |l| l.min(todo.len()))];

        let next = AtomicUsize::new(0);
        let failed = AtomicUsize::new(0);
        let write_error: Mutex<Option<anyhow::Error>> = Mutex::new(None);
        let workers = self.config.claims_in_flight.max(1).min(todo.len().max(1));
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(claim) = todo.get(i) else { break };
                    let rr = self.run_claim(claim);
                    if rr.status == RunStatus::Failed {
                        failed.fetch_add(1, Ordering::Relaxed);
                    }
                    let path = rec_dir.join(record_file_name(&rr.id));
                    let body = serde_json::to_vec_pretty(&rr).expect("run record serializes");
                    if let Err(e) = write_atomic(&path, &body) {
                        write_error.lock().unwrap().get_or_insert(anyhow::anyhow!("writing {}: {e}", path.display()));
                    }
                    log::info!("claim {} {:?}", rr.id, rr.status);
                });
            }
        });
        if let Some(e) = write_error.into_inner().unwrap() {
            return Err(e);
        }
        if !records.is_empty() {
            crate::report::write_reports(&run_dir)?;
        }
        Ok(BatchOutcome {
            run_dir,
            processed: todo.len(),
            skipped,
            failed: failed.into_inner(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::SyntheticProvider;
    use gdefense_core::{HashingEmbedder, Report};

    fn claim(id: &str) -> ClaimRecord {
        let reports = vec![Report::from_text(0, "Taxes rose in 2019. Wages fell sharply last year.").unwrap()];
        let label = VeracityScheme::ThreeWay.by_name("half");
        ClaimRecord::new(id, "Taxes rose in 2019 and wages fell", label, reports, false).unwrap()
    }

    fn run(cfg: PipelineConfig) -> RunRecord {
        let gw = Gateway::new(SyntheticProvider, None, cfg.gateway_options());
        let emb = HashingEmbedder::new(64);
        let p = Pipeline { config: &cfg, gateway: &gw, embedder: &emb, adapter: None, scheme: VeracityScheme::ThreeWay };
        p.run_claim(&claim("c1"))
    }

    #[test]
    fn full_path() {
        let r = run(PipelineConfig::default());
        assert_eq!(r.status, RunStatus::Completed, "{:?}", r.error);
        assert_eq!(r.n, 2);
        assert_eq!(r.explanation_count(), 4);
        assert!(r.explanation_graph.is_some() && r.summary.is_some());
        assert_eq!(r.trace[..2], ["decompose", "edges"]);
        for s in [Stage::ClaimDecomposition, Stage::EdgeGeneration, Stage::ExplanationGeneration, Stage::Inference] {
            assert!(r.usage.iter().any(|(x, _)| x == s), "{s:?}");
        }
        assert!(r.durations.decomposition.is_some() && r.durations.final_explanation.is_some());
    }

    #[test]
    fn claim_only_and_single_explanations() {
        let cfg = PipelineConfig { ablations: [Ablation::NoSubclaims].into(), ..Default::default() };
        let r = run(cfg);
        assert_eq!((r.n, r.explanation_count()), (0, 2));
        assert_eq!(r.explanations[0].sub_claim_index, 0);
        let cfg = PipelineConfig { ablations: [Ablation::NoCompeting].into(), ..Default::default() };
        let r = run(cfg);
        assert_eq!(r.explanation_count(), r.n);
        assert_eq!(r.calls[&Stage::ExplanationGeneration] as usize, r.n);
    }

    #[test]
    fn record_names() {
        assert_eq!(record_file_name("abc-1"), "abc-1.json");
        assert_ne!(record_file_name("a/b"), record_file_name("a_b"));
        let up = record_file_name("../x");
        assert!(up.starts_with("_x-") && up.ends_with(".json") && !up.contains('/'));
    }
}
