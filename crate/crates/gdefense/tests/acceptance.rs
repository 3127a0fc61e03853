//! Acceptance checks. Runs as a plain binary and prints one PASS/FAIL line per
//! criterion; exits non-zero if any fails or overruns its time limit.

mod common;

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};

use gdefense::adapter::StdioAdapter;
use gdefense::config::{Ablation, InferencePath};
use gdefense::gateway::RetryPolicy;
use gdefense::pipeline::{read_run_records, BatchOptions, RunRecord, RunStatus};
use gdefense::report::{cost_report, COST_FILE, EVALUATION_FILE};
use gdefense::synthetic::SyntheticProvider;
use gdefense_core::explain::ExplanationTexts;
use gdefense_core::graph::{decompose_claim, generate_edges, DecompositionPrompt, Edge};
use gdefense_core::inference::{
    argmax_checked, graph_to_seq, predict_external, AdapterError, ClassifierAdapter, InferenceError,
};
use gdefense_core::label::map_six_to_three;
use gdefense_core::metrics::{discrepancy, macro_metrics};
use gdefense_core::prompt::{render_prompt, TemplateId};
use gdefense_core::retrieval::{retrieve_top_k, Corpus, EvidenceCandidate};
use gdefense_core::summary::{build_explanation_graph, export_dot, export_structured, parse_structured, summarize};
use gdefense_core::{
    ClaimCenteredGraph, CompetingExplanations, ConfusionMatrix, DefenseGraph, EdgeProvenance, EvidenceSet, Generator,
    LlmError, Orientation, PredictionSource, Pricing, Stage, SubClaimVerdict, TokenUsage, VeracityScheme,
};

struct Criterion {
    id: u8,
    name: &'static str,
    limit: Duration,
    check: fn(),
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "graph serialization golden", limit: secs(1), check: graph_serialization_golden },
        Criterion { id: 2, name: "graph invariants", limit: secs(5), check: graph_invariants },
        Criterion { id: 3, name: "retrieval oracle", limit: secs(10), check: retrieval_oracle },
        Criterion { id: 4, name: "metric oracle", limit: secs(5), check: metric_oracle },
        Criterion { id: 5, name: "discrepancy exactness", limit: secs(1), check: discrepancy_exact },
        Criterion { id: 6, name: "label mapping", limit: secs(1), check: label_mapping },
        Criterion { id: 7, name: "prompt fidelity", limit: secs(1), check: prompt_fidelity },
        Criterion { id: 8, name: "explanation filtering", limit: secs(2), check: explanation_filtering },
        Criterion { id: 9, name: "end-to-end fixture batch", limit: secs(30), check: fixture_batch },
        Criterion { id: 10, name: "ablation stage traces", limit: secs(30), check: ablation_traces },
        Criterion { id: 11, name: "rerun makes no provider calls", limit: secs(10), check: rerun_is_free },
        Criterion { id: 12, name: "adapter contract", limit: secs(2), check: adapter_contract },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(c.check));
        let took = start.elapsed();
        let verdict = match outcome {
            Err(e) => Some(panic_text(&e)),
            Ok(()) if took > c.limit => Some(format!("took {took:.2?}, limit {:?}", c.limit)),
            Ok(()) => None,
        };
        match verdict {
            None => println!("PASS {:>2} {} ({took:.2?})", c.id, c.name),
            Some(why) => {
                failed += 1;
                println!("FAIL {:>2} {} ({took:.2?}): {why}", c.id, c.name);
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn panic_text(e: &Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<String>()
        .cloned()
        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panicked".into())
}

/// Replays canned replies in order and logs every call.
struct Scripted {
    replies: RefCell<VecDeque<String>>,
    calls: RefCell<Vec<Stage>>,
}

impl Scripted {
    fn new(replies: impl IntoIterator<Item = String>) -> Self {
        Scripted { replies: RefCell::new(replies.into_iter().collect()), calls: RefCell::default() }
    }

    fn count(&self, stage: Stage) -> usize {
        self.calls.borrow().iter().filter(|s| **s == stage).count()
    }
}

impl Generator for Scripted {
    fn generate(&self, stage: Stage, _prompt: &str, _temperature: f64) -> Result<String, LlmError> {
        self.calls.borrow_mut().push(stage);
        self.replies.borrow_mut().pop_front().ok_or_else(|| LlmError::Provider("script exhausted".into()))
    }
}

fn graph_serialization_golden() {
    let edges = [(3, 0), (4, 0), (5, 0), (1, 3), (2, 3)]
        .into_iter()
        .map(|(source, target)| Edge { source, target, provenance: EdgeProvenance::LlmGenerated })
        .collect();
    let g = ClaimCenteredGraph {
        claim: "claim".into(),
        sub_claims: (1..=5).map(|i| format!("sub-claim {i}")).collect(),
        edges,
    };
    assert_eq!(
        graph_to_seq(&g).text,
        "Directed Graph describes a graph among 0, 1, 2, 3, 4, 5. Node 0 is connected to nodes 3, 4, and 5 by \
         incoming edges. Node 3 is connected to nodes 1 and 2 by incoming edges."
    );
}

fn sub_claim_reply(rng: &mut StdRng, subs: &[String]) -> String {
    subs.iter()
        .enumerate()
        .map(|(i, s)| if rng.random_bool(0.5) { format!("{}. {s}", i + 1) } else { format!("- {s}") })
        .collect::<Vec<_>>()
        .join("\n")
}

fn edge_reply(rng: &mut StdRng, n: usize) -> (String, Vec<(usize, usize)>) {
    let count = rng.random_range(0..=2 * n + 2);
    let pairs: Vec<(usize, usize)> =
        (0..count).map(|_| (rng.random_range(0..=n + 2), rng.random_range(0..=n + 2))).collect();
    let body: Vec<String> = pairs
        .iter()
        .map(|(a, b)| if rng.random_bool(0.5) { format!("({a}, {b})") } else { format!("[{a}, {b}]") })
        .collect();
    (format!("Here you go: {{'edges': [{}]}}", body.join(", ")), pairs)
}

fn reaches_claim(g: &ClaimCenteredGraph) -> bool {
    let mut seen = BTreeSet::from([0usize]);
    let mut queue = VecDeque::from([0usize]);
    while let Some(t) = queue.pop_front() {
        for e in g.edges.iter().filter(|e| e.target == t) {
            if seen.insert(e.source) {
                queue.push_back(e.source);
            }
        }
    }
    seen.len() == g.n() + 1
}

fn graph_invariants() {
    let mut rng = StdRng::seed_from_u64(0x6a7f);
    for case in 0..600 {
        let n = rng.random_range(2..=9);
        let subs: Vec<String> = (1..=n).map(|i| format!("Sub-claim {i} of case {case} holds")).collect();
        let bad_decomps = rng.random_range(0..=2);
        let bad_edges = rng.random_range(0..=3);
        let mut replies = Vec::new();
        for _ in 0..bad_decomps {
            replies.push(if rng.random_bool(0.5) { String::new() } else { format!("1. {}", subs[0]) });
        }
        replies.push(sub_claim_reply(&mut rng, &subs));
        for _ in 0..bad_edges {
            replies.push("I cannot determine any dependencies.".into());
        }
        let (edge_text, proposed) = edge_reply(&mut rng, n);
        replies.push(edge_text);
        let script = Scripted::new(replies);

        let got = decompose_claim(&script, "claim", DecompositionPrompt::Standard).unwrap();
        assert_eq!(got, subs, "case {case}");
        let generated = generate_edges(&script, "claim", &got).unwrap();
        assert_eq!(generated.fell_back, bad_edges == 3, "case {case}");
        assert_eq!(script.count(Stage::ClaimDecomposition), bad_decomps + 1);
        assert_eq!(script.count(Stage::EdgeGeneration), (bad_edges + 1).min(3));
        let g = ClaimCenteredGraph::assemble("claim", got, &generated.edges).unwrap();

        assert!(g.n() >= 2);
        let pairs: Vec<(usize, usize)> = g.edges.iter().map(|e| (e.source, e.target)).collect();
        let unique: BTreeSet<_> = pairs.iter().copied().collect();
        assert_eq!(unique.len(), pairs.len(), "duplicate edge in case {case}");
        assert!(pairs.iter().all(|(s, t)| s != t && *s <= n && *t <= n), "case {case}");
        for i in 1..=n {
            assert!(unique.contains(&(i, 0)), "missing ({i}, 0) in case {case}");
        }
        if bad_edges < 3 {
            for &(s, t) in &proposed {
                if s != t && s <= n && t <= n {
                    assert!(unique.contains(&(s, t)), "dropped valid edge ({s}, {t}) in case {case}");
                }
            }
        }
        assert!(reaches_claim(&g), "case {case}");
    }
}

fn oracle_cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y);
    let na: f64 = a.iter().fold(0.0, |acc, x| acc + x * x);
    let nb: f64 = b.iter().fold(0.0, |acc, x| acc + x * x);
    if na == 0.0 || nb == 0.0 {
        None
    } else {
        Some((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
    }
}

fn random_vector(rng: &mut StdRng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-2i32..=2) as f64).collect()
}

fn retrieval_oracle() {
    let mut rng = StdRng::seed_from_u64(0x0c05);
    for case in 0..150 {
        let dim = rng.random_range(8..=64);
        let size = rng.random_range(1..=200);
        let mut ids: Vec<(usize, usize)> = (0..size).map(|i| (i / 7, i % 7)).collect();
        for i in (1..ids.len()).rev() {
            ids.swap(i, rng.random_range(0..=i));
        }
        let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(size);
        for _ in 0..size {
            let v = match rng.random_range(0..10) {
                0 if !vectors.is_empty() => vectors[rng.random_range(0..vectors.len())].clone(),
                1 if !vectors.is_empty() => vectors[rng.random_range(0..vectors.len())].iter().map(|x| x * 2.0).collect(),
                2 => vec![0.0; dim],
                _ => random_vector(&mut rng, dim),
            };
            vectors.push(v);
        }
        let candidates = ids
            .iter()
            .zip(&vectors)
            .map(|(&(r, s), v)| EvidenceCandidate {
                report_index: r,
                sentence_index: s,
                text: format!("r{r}s{s}"),
                embedding: Some(v.clone()),
            })
            .collect();
        let corpus = Corpus { candidates };
        let query = if rng.random_range(0..20) == 0 {
            vec![0.0; dim]
        } else if rng.random_bool(0.3) {
            vectors[rng.random_range(0..size)].clone()
        } else {
            random_vector(&mut rng, dim)
        };
        let k = rng.random_range(1..=size + 5);

        let mut oracle: Vec<(Option<f64>, (usize, usize))> =
            ids.iter().zip(&vectors).map(|(&id, v)| (oracle_cosine(&query, v), id)).collect();
        oracle.sort_by(|a, b| {
            let sa = a.0.unwrap_or(f64::NEG_INFINITY);
            let sb = b.0.unwrap_or(f64::NEG_INFINITY);
            sb.partial_cmp(&sa).unwrap().then(a.1.cmp(&b.1))
        });
        oracle.truncate(k);

        let got = retrieve_top_k(3, &query, &corpus, k).unwrap();
        assert_eq!(got.sub_claim_index, 3);
        let got: Vec<(Option<f64>, (usize, usize))> =
            got.items.iter().map(|e| (e.score, (e.report_index, e.sentence_index))).collect();
        assert_eq!(got, oracle, "case {case} (size {size}, k {k})");
    }
}

struct OracleClass {
    p: f64,
    r: f64,
    f1: f64,
}

fn oracle_class(counts: &[Vec<u64>], c: usize) -> OracleClass {
    let tp = counts[c][c] as f64;
    let mut fp = 0.0;
    let mut fn_ = 0.0;
    for (k, row) in counts.iter().enumerate() {
        if k != c {
            fp += row[c] as f64;
            fn_ += counts[c][k] as f64;
        }
    }
    let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let r = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
    let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    OracleClass { p, r, f1 }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

fn metric_oracle() {
    let mut rng = StdRng::seed_from_u64(0x3e7);
    let mut checked = 0;
    while checked < 1200 {
        let scheme = if rng.random_bool(0.5) { VeracityScheme::ThreeWay } else { VeracityScheme::SixWay };
        let l = scheme.len();
        let counts: Vec<Vec<u64>> = (0..l)
            .map(|_| (0..l).map(|_| if rng.random_bool(0.35) { 0 } else { rng.random_range(0..=40) }).collect())
            .collect();
        let m = ConfusionMatrix::from_counts(scheme, counts.clone());
        if counts.iter().flatten().all(|x| *x == 0) {
            assert!(macro_metrics(&m).is_err());
            continue;
        }
        let got = macro_metrics(&m).unwrap();
        let per: Vec<OracleClass> = (0..l).map(|c| oracle_class(&counts, c)).collect();
        let mean = |f: fn(&OracleClass) -> f64| per.iter().map(f).sum::<f64>() / l as f64;
        assert!(close(got.precision, mean(|c| c.p)), "precision {counts:?}");
        assert!(close(got.recall, mean(|c| c.r)), "recall {counts:?}");
        assert!(close(got.f1, mean(|c| c.f1)), "f1 {counts:?}");
        for (g, o) in got.per_class.iter().zip(&per) {
            assert!(close(g.precision, o.p) && close(g.recall, o.r) && close(g.f1, o.f1), "{counts:?}");
        }
        checked += 1;
    }

    let worked = ConfusionMatrix::from_counts(VeracityScheme::ThreeWay, vec![vec![5, 0, 0], vec![0, 0, 5], vec![0, 0, 5]]);
    let f1 = macro_metrics(&worked).unwrap().f1;
    assert!((f1 - 0.5556).abs() <= 1e-4, "worked example gave {f1}");

    for scheme in [VeracityScheme::ThreeWay, VeracityScheme::SixWay] {
        for _ in 0..50 {
            let l = scheme.len();
            let counts: Vec<Vec<u64>> =
                (0..l).map(|r| (0..l).map(|c| if r == c { rng.random_range(1..=30) } else { 0 }).collect()).collect();
            let got = macro_metrics(&ConfusionMatrix::from_counts(scheme, counts)).unwrap();
            assert_eq!((got.precision, got.recall, got.f1), (1.0, 1.0, 1.0));
        }
    }
}

fn discrepancy_exact() {
    let three: [(&str, f64); 3] = [("false", 0.0), ("half", 2.5), ("true", 5.0)];
    let six: [(&str, f64); 6] = [
        ("pants-fire", 0.0),
        ("false", 1.0),
        ("barely-true", 2.0),
        ("half-true", 3.0),
        ("mostly-true", 4.0),
        ("true", 5.0),
    ];
    for (scheme, table) in [(VeracityScheme::ThreeWay, &three[..]), (VeracityScheme::SixWay, &six[..])] {
        assert_eq!(scheme.len(), table.len());
        for (a, sa) in table {
            for (b, sb) in table {
                let d = discrepancy(scheme.by_name(a).unwrap(), scheme.by_name(b).unwrap()).unwrap();
                assert_eq!(d, (sa - sb).abs(), "{a} vs {b}");
            }
        }
    }
    let t = VeracityScheme::ThreeWay;
    assert_eq!(discrepancy(t.by_name("false").unwrap(), t.by_name("true").unwrap()).unwrap(), 5.0);
    for a in VeracityScheme::ThreeWay.all() {
        for b in VeracityScheme::SixWay.all() {
            assert!(discrepancy(a, b).is_err() && discrepancy(b, a).is_err());
        }
    }
}

fn label_mapping() {
    let grouping = [
        ("pants-fire", "false"),
        ("false", "false"),
        ("barely-true", "false"),
        ("half-true", "half"),
        ("mostly-true", "true"),
        ("true", "true"),
    ];
    let six = VeracityScheme::SixWay;
    assert_eq!(six.all().count(), grouping.len());
    for (from, to) in grouping {
        let mapped = map_six_to_three(six.by_name(from).unwrap()).unwrap();
        assert_eq!((mapped.scheme(), mapped.name()), (VeracityScheme::ThreeWay, to), "{from}");
    }
    for l in VeracityScheme::ThreeWay.all() {
        assert!(map_six_to_three(l).is_err());
    }
}

fn prompt_fidelity() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/prompts");
    let ids = [
        TemplateId::Decompose,
        TemplateId::Edges,
        TemplateId::Rationale,
        TemplateId::Inference,
        TemplateId::Summarize,
        TemplateId::Hyperedges,
        TemplateId::Background,
        TemplateId::DecomposePlus,
    ];
    for id in ids {
        let slots = id.slots();
        let bindings: Vec<(&str, &str)> = slots.iter().map(|s| (*s, "")).collect();
        let rendered = render_prompt(id, &bindings).unwrap();
        let path = dir.join(format!("{}.txt", id.name()));
        let want = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(rendered == want, "{} differs from {}", id.name(), path.display());
    }
}

fn competing(i: usize, false_oriented: &str, true_oriented: &str) -> CompetingExplanations {
    CompetingExplanations {
        sub_claim_index: i,
        texts: ExplanationTexts::Competing { false_oriented: false_oriented.into(), true_oriented: true_oriented.into() },
        evidence: EvidenceSet::empty(i, 5),
        background: None,
    }
}

fn explanation_filtering() {
    let mut rng = StdRng::seed_from_u64(0xf11);
    let three = VeracityScheme::ThreeWay;
    for case in 0..500 {
        let n = if rng.random_range(0..8) == 0 { 0 } else { rng.random_range(2..=8) };
        let base = if n == 0 {
            ClaimCenteredGraph::claim_only("claim")
        } else {
            ClaimCenteredGraph::assemble("claim", (1..=n).map(|i| format!("s{i}")).collect(), &[]).unwrap()
        };
        let single = rng.random_range(0..6) == 0;
        let explanations: Vec<CompetingExplanations> = base
            .units()
            .into_iter()
            .map(|i| {
                if single {
                    CompetingExplanations {
                        sub_claim_index: i,
                        texts: ExplanationTexts::Single { analysis: format!("a{i}") },
                        evidence: EvidenceSet::empty(i, 5),
                        background: None,
                    }
                } else {
                    competing(i, &format!("f{i}"), &format!("t{i}"))
                }
            })
            .collect();
        let dg = DefenseGraph::new(base.clone(), explanations).unwrap();
        let mut verdicts: Vec<SubClaimVerdict> = base
            .units()
            .into_iter()
            .map(|i| SubClaimVerdict {
                sub_claim_index: i,
                reasoning: String::new(),
                prediction: rng.random_bool(0.5),
                fallback: false,
            })
            .collect();
        let expected: BTreeMap<usize, bool> = verdicts.iter().map(|v| (v.sub_claim_index, v.prediction)).collect();
        for i in (1..verdicts.len()).rev() {
            verdicts.swap(i, rng.random_range(0..=i));
        }
        let label = three.label(rng.random_range(0..3)).unwrap();
        let eg = build_explanation_graph(&dg, verdicts, "summary".into(), label).unwrap();

        assert_eq!(eg.kept.len(), base.units().len(), "case {case}");
        for (i, verdict) in expected {
            let kept = &eg.kept[&i];
            let (orientation, text) = match (single, verdict) {
                (true, _) => (Orientation::Analysis, format!("a{i}")),
                (false, true) => (Orientation::TrueOriented, format!("t{i}")),
                (false, false) => (Orientation::FalseOriented, format!("f{i}")),
            };
            assert_eq!((kept.orientation, &kept.text), (orientation, &text), "case {case} node {i}");
        }
        let round = parse_structured(&export_structured(&eg)).unwrap();
        assert_eq!(round, eg);
    }

    let claim =
        "The U.S. Congress passed the 22nd Amendment in order to \"make sure President Franklin D. Roosevelt did not get re-elected\".";
    let c1 = "The U.S. Congress passed the 22nd Amendment.";
    let c2 = "The purpose of the 22nd Amendment was to prevent President Franklin D. Roosevelt from being re-elected.";
    let c1_true = "The U.S. Congress passed the 22nd Amendment in 1947, which was later ratified by the states in 1951.";
    let c1_false = "The 22nd Amendment was approved by Congress in 1947, with an exception that would exclude a president in office from term limit during the ratification process.";
    let c2_true = "The 22nd Amendment was not intended to prevent President Franklin D. Roosevelt from being re-elected, but rather to establish a term limit for all future presidents.";
    let c2_false = "The 22nd Amendment was not intended to prevent President Franklin D. Roosevelt from being re-elected, but rather to establish a term limit for all future presidents. FDR died in 1945. The amendment was passed in 1947 and ratified in 1951 — after his death.";
    let base = ClaimCenteredGraph::assemble(claim, vec![c1.into(), c2.into()], &[]).unwrap();
    let dg = DefenseGraph::new(base, vec![competing(1, c1_false, c1_true), competing(2, c2_false, c2_true)]).unwrap();
    let reply = "{'sub-claims-veracity': {'sub-claim 1': {'reasoning': 'Congress did pass it.', 'prediction': 'True'}, \
                 'sub-claim 2': {'reasoning': 'FDR was already dead.', 'prediction': 'False'}}, \
                 'final-explanation': 'Passed, but not aimed at FDR.'}";
    let script = Scripted::new([reply.to_string()]);
    let half = three.by_name("half").unwrap();
    let outcome = summarize(&script, &dg, half, None).unwrap();
    let eg = build_explanation_graph(&dg, outcome.verdicts, outcome.summary, half).unwrap();
    let kept: Vec<(Orientation, &str)> = eg.kept.values().map(|k| (k.orientation, k.text.as_str())).collect();
    assert_eq!(kept, [(Orientation::TrueOriented, c1_true), (Orientation::FalseOriented, c2_false)]);
    assert!(eg.verdicts.iter().all(|v| !v.fallback));
}

fn fixture_batch() {
    let data = common::mini();
    assert_eq!(data.records.len(), 10);
    let cfg = common::scenario("default");
    let gw = common::fixture_gateway(&cfg, "default", None);
    let emb = common::embedder(&cfg);
    let p = common::pipeline(&cfg, &gw, &emb, None);
    let out = tempfile::tempdir().unwrap();
    let outcome = p.run_batch("mini", &data.records, out.path(), &BatchOptions { limit: None }).unwrap();
    assert_eq!((outcome.processed, outcome.skipped, outcome.failed), (10, 0, 0));

    let records = read_run_records(&outcome.run_dir).unwrap();
    assert_eq!(records.len(), 10);
    let mut total = TokenUsage::default();
    for r in &records {
        assert_eq!(r.status, RunStatus::Completed, "{}: {:?}", r.id, r.error);
        let g = r.explanation_graph.as_ref().expect("explanation graph");
        let g = parse_structured(&g.to_string()).expect("explanation graph parses");
        assert!(export_dot(&g).starts_with("digraph"));
        assert!(!r.summary.as_deref().unwrap_or("").trim().is_empty(), "{}", r.id);
        total += r.usage.total();
    }

    let fixture_total = common::fixture_provider("default").total_usage();
    assert_eq!(total, fixture_total);
    assert_eq!(gw.provider_calls() as usize, common::fixture_provider("default").len());

    for file in [EVALUATION_FILE, COST_FILE] {
        let text = fs::read_to_string(outcome.run_dir.join(file)).unwrap();
        serde_json::from_str::<serde_json::Value>(&text).unwrap();
    }
    let eval: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(outcome.run_dir.join(EVALUATION_FILE)).unwrap()).unwrap();
    assert_eq!(eval["status"]["completed"], 10);
    let cost: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(outcome.run_dir.join(COST_FILE)).unwrap()).unwrap();
    assert_eq!(cost["total_usage"]["input_tokens"], fixture_total.input_tokens);
    assert_eq!(cost["total_usage"]["output_tokens"], fixture_total.output_tokens);
    assert_eq!(cost_report(&outcome.run_dir, None).unwrap().total_usage, fixture_total);

    let input = Pricing::DEFAULT.cost(TokenUsage::new(1_000_000, 0));
    let output = Pricing::DEFAULT.cost(TokenUsage::new(0, 1_000_000));
    assert_eq!((input.to_string(), output.to_string()), ("$0.500000".into(), "$1.500000".into()));
    assert_eq!((input.dollars(), output.dollars()), (0.5, 1.5));
}

fn run_scenario(scenario: &str, tweak: impl FnOnce(&mut gdefense::config::PipelineConfig), adapter: Option<&(dyn ClassifierAdapter + Sync)>) -> Vec<RunRecord> {
    let data = common::mini();
    let mut cfg = common::scenario(scenario);
    tweak(&mut cfg);
    let gw = common::fixture_gateway(&cfg, scenario, None);
    let emb = common::embedder(&cfg);
    let p = common::pipeline(&cfg, &gw, &emb, adapter);
    let records: Vec<RunRecord> = data.records.iter().map(|r| p.run_claim(r)).collect();
    for r in &records {
        assert_eq!(r.status, RunStatus::Completed, "{scenario} {}: {:?}", r.id, r.error);
    }
    records
}

fn calls(r: &RunRecord, stage: Stage) -> usize {
    r.calls.get(&stage).copied().unwrap_or(0) as usize
}

fn traced(r: &RunRecord, prefix: &str) -> bool {
    r.trace.iter().any(|t| t.starts_with(prefix))
}

struct CountingAdapter(AtomicUsize);

impl ClassifierAdapter for CountingAdapter {
    fn classify(&self, _prompt: &str, labels: &[&str]) -> Result<Vec<f64>, AdapterError> {
        self.0.fetch_add(1, Ordering::Relaxed);
        Ok(vec![1.0 / labels.len() as f64; labels.len()])
    }
}

fn ablation_traces() {
    for r in run_scenario("default", |_| {}, None) {
        assert!(r.n >= 2 && traced(&r, "decompose") && traced(&r, "edges"));
        assert_eq!(calls(&r, Stage::ExplanationGeneration), 2 * r.n);
        assert!(r.inference_prompt.as_deref().unwrap().contains("# Graph Structure"));
    }

    for r in run_scenario("no_competing", |_| {}, None) {
        assert_eq!(calls(&r, Stage::ExplanationGeneration), r.n, "{}", r.id);
        assert_eq!(r.explanation_count(), r.n);
        assert!(!traced(&r, "explain_pair:") && traced(&r, "explain_single:"));
    }

    for r in run_scenario("no_edges", |_| {}, None) {
        assert!(!r.inference_prompt.as_deref().unwrap().contains("# Graph Structure"), "{}", r.id);
        assert_eq!(calls(&r, Stage::EdgeGeneration), 0);
        assert!(r.structure.is_none() && !traced(&r, "edges"));
        assert_eq!(r.graph.as_ref().unwrap().edges.len(), r.n);
    }

    for r in run_scenario("no_evidence", |_| {}, None) {
        assert!(r.explanations.iter().all(|e| e.evidence.items.is_empty()), "{}", r.id);
        assert!(!traced(&r, "retrieve:"));
        assert_eq!(calls(&r, Stage::ExplanationGeneration), 2 * r.n);
    }

    for r in run_scenario("no_subclaims", |_| {}, None) {
        assert_eq!(r.n, 0, "{}", r.id);
        assert_eq!(calls(&r, Stage::ClaimDecomposition), 0);
        assert_eq!(calls(&r, Stage::EdgeGeneration), 0);
        assert_eq!(calls(&r, Stage::ExplanationGeneration), 2);
        assert!(!traced(&r, "decompose"));
    }

    let adapter = CountingAdapter(AtomicUsize::new(0));
    let tweak = |cfg: &mut gdefense::config::PipelineConfig| {
        cfg.inference_path = InferencePath::ExternalAdapter;
        cfg.ablations.insert(Ablation::NoInferenceTraining);
    };
    for r in run_scenario("default", tweak, Some(&adapter)) {
        assert_eq!(r.prediction.as_ref().unwrap().source, PredictionSource::ZeroShot);
        assert!(traced(&r, "infer:zero_shot") && !traced(&r, "infer:external"));
        assert!(calls(&r, Stage::Inference) >= 1);
    }
    assert_eq!(adapter.0.load(Ordering::Relaxed), 0);
}

fn comparable(r: &RunRecord) -> serde_json::Value {
    let mut v = serde_json::to_value(r).unwrap();
    v.as_object_mut().unwrap().remove("durations");
    v
}

fn rerun_is_free() {
    let data = common::mini();
    let cfg = common::scenario("default");
    let emb = common::embedder(&cfg);
    let out = tempfile::tempdir().unwrap();
    let cache = out.path().join("cache");
    let fixture_len = common::fixture_provider("default").len() as u64;

    let first = common::fixture_gateway(&cfg, "default", Some(&cache));
    let done = common::pipeline(&cfg, &first, &emb, None)
        .run_batch("mini", &data.records, &out.path().join("a"), &BatchOptions { limit: None })
        .unwrap();
    assert_eq!((done.processed, first.provider_calls()), (10, fixture_len));
    let baseline: Vec<serde_json::Value> = read_run_records(&done.run_dir).unwrap().iter().map(comparable).collect();

    let resumed = common::fixture_gateway(&cfg, "default", Some(&cache));
    let again = common::pipeline(&cfg, &resumed, &emb, None)
        .run_batch("mini", &data.records, &out.path().join("a"), &BatchOptions { limit: None })
        .unwrap();
    assert_eq!((again.processed, again.skipped), (0, 10));
    assert_eq!(resumed.provider_calls(), 0);

    let cached = common::fixture_gateway(&cfg, "default", Some(&cache));
    let fresh = common::pipeline(&cfg, &cached, &emb, None)
        .run_batch("mini", &data.records, &out.path().join("b"), &BatchOptions { limit: None })
        .unwrap();
    assert_eq!(fresh.processed, 10);
    assert_eq!((cached.provider_calls(), cached.cache_hits()), (0, fixture_len));
    let replayed: Vec<serde_json::Value> = read_run_records(&fresh.run_dir).unwrap().iter().map(comparable).collect();
    assert_eq!(replayed.len(), baseline.len());
    for (a, b) in replayed.iter().zip(&baseline) {
        let (mut a, mut b) = (a.clone(), b.clone());
        for v in [&mut a, &mut b] {
            v.as_object_mut().unwrap().remove("usage");
        }
        assert_eq!(a, b);
    }
}

struct Fixed(Vec<f64>);

impl ClassifierAdapter for Fixed {
    fn classify(&self, _prompt: &str, _labels: &[&str]) -> Result<Vec<f64>, AdapterError> {
        Ok(self.0.clone())
    }
}

fn adapter_contract() {
    let three = VeracityScheme::ThreeWay;
    let six = VeracityScheme::SixWay;
    let picks: [(VeracityScheme, Vec<f64>, &str); 7] = [
        (three, vec![0.1, 0.2, 0.7], "true"),
        (three, vec![0.6, 0.3, 0.1], "false"),
        (three, vec![0.4, 0.4, 0.2], "false"),
        (three, vec![0.2, 0.4, 0.4], "half"),
        (three, vec![0.25, 0.25, 0.5], "true"),
        (six, vec![0.1, 0.3, 0.3, 0.1, 0.1, 0.1], "false"),
        (six, vec![1.0 / 6.0; 6], "pants-fire"),
    ];
    for (scheme, probs, want) in picks {
        let r = predict_external(&Fixed(probs.clone()), "prompt", scheme).unwrap();
        assert_eq!(r.label.name(), want, "{probs:?}");
        assert_eq!(r.source, PredictionSource::ExternalClassifier);
        assert_eq!(r.probabilities.as_deref(), Some(&probs[..]));
    }
    let malformed = [vec![0.5, 0.5], vec![0.2, 0.2, 0.2, 0.4], vec![-0.1, 0.6, 0.5], vec![f64::NAN, 0.5, 0.5], vec![0.3, 0.3, 0.3], vec![]];
    for probs in malformed {
        let e = predict_external(&Fixed(probs.clone()), "prompt", three).unwrap_err();
        assert!(matches!(e, InferenceError::Adapter(AdapterError::Contract(_))), "{probs:?}: {e:?}");
        assert!(matches!(argmax_checked(&probs, 3), Err(AdapterError::Contract(_))));
    }

    let quick = RetryPolicy { attempts: 2, base_delay: Duration::from_millis(1) };
    let tie = r#"while read -r line; do echo '{"probabilities":[0.45,0.1,0.45]}'; done"#;
    let stub = StdioAdapter::new("sh", vec!["-c".into(), tie.into()]).with_retry(quick);
    assert_eq!(predict_external(&stub, "prompt", three).unwrap().label.name(), "false");
    let short = r#"while read -r line; do echo '{"probabilities":[1.0]}'; done"#;
    let stub = StdioAdapter::new("sh", vec!["-c".into(), short.into()]).with_retry(quick);
    assert!(matches!(predict_external(&stub, "prompt", three), Err(InferenceError::Adapter(AdapterError::Contract(_)))));
    let garbage = r#"while read -r line; do echo 'not json'; done"#;
    let stub = StdioAdapter::new("sh", vec!["-c".into(), garbage.into()]).with_retry(quick);
    assert!(matches!(stub.classify("prompt", &["a", "b"]), Err(AdapterError::Contract(_))));

    // Through the pipeline, the adapter's argmax becomes the claim label.
    let data = common::mini();
    let mut cfg = gdefense::config::PipelineConfig { inference_path: InferencePath::ExternalAdapter, ..Default::default() };
    cfg.provider.kind = gdefense::config::ProviderKind::Synthetic;
    let gw = gdefense::gateway::Gateway::new(SyntheticProvider, None, cfg.gateway_options());
    let emb = common::embedder(&cfg);
    let fixed = Fixed(vec![0.3, 0.35, 0.35]);
    let r = common::pipeline(&cfg, &gw, &emb, Some(&fixed)).run_claim(&data.records[0]);
    assert_eq!(r.status, RunStatus::Completed, "{:?}", r.error);
    let pred = r.prediction.unwrap();
    assert_eq!((pred.label.name(), pred.source), ("half", PredictionSource::ExternalClassifier));
    assert!(r.trace.iter().any(|t| t == "infer:external"));
}
