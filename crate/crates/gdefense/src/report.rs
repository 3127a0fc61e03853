//! Evaluation and cost reports over a run directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::bail;
use gdefense_core::metrics::{discrepancy, judge_explanation, macro_metrics, JudgeAggregate, MAX_DISCREPANCY};
use gdefense_core::summary::parse_structured;
use gdefense_core::{
    ConfusionMatrix, Cost, JudgeScores, LatencyProfile, MacroMetrics, Pricing, Stage, TokenLedger, TokenUsage,
    VeracityScheme,
};
use serde::Serialize;

use crate::gateway::Gateway;
use crate::pipeline::{read_run_info, read_run_records, RunRecord, RunStatus};

pub const EVALUATION_FILE: &str = "evaluation.json";
pub const COST_FILE: &str = "cost.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StatusCounts {
    pub total: usize,
    pub completed: usize,
    pub partial: usize,
    pub failed: usize,
    pub failed_by_stage: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JudgeSummary {
    pub aggregate: JudgeAggregate,
    pub failures: usize,
    pub usage: TokenLedger,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub scheme: VeracityScheme,
    pub status: StatusCounts,
    /// Records with both a gold label and a prediction.
    pub scored: usize,
    pub metrics: Option<MacroMetrics>,
    pub accuracy: Option<f64>,
    pub confusion: ConfusionMatrix,
    /// Mean discrepancy over scored records.
    pub discrepancy_scored: Option<f64>,
    /// Mean discrepancy counting each unpredicted record at the maximum.
    pub discrepancy_failures_as_max: Option<f64>,
    pub judge: Option<JudgeSummary>,
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

pub fn status_counts(records: &[RunRecord]) -> StatusCounts {
    let mut c = StatusCounts { total: records.len(), ..Default::default() };
    for r in records {
        match r.status {
            RunStatus::Completed => c.completed += 1,
            RunStatus::Partial => c.partial += 1,
            RunStatus::Failed => c.failed += 1,
        }
        if r.status != RunStatus::Completed {
            *c.failed_by_stage.entry(r.failed_stage.clone().unwrap_or_default()).or_default() += 1;
        }
    }
    c
}

/// Score records against their gold labels. Order of `records` is irrelevant.
pub fn evaluate_records(scheme: VeracityScheme, records: &[RunRecord]) -> anyhow::Result<EvaluationReport> {
    let mut confusion = ConfusionMatrix::new(scheme);
    let mut scored_d = Vec::new();
    let mut all_d = Vec::new();
    for r in records {
        let Some(gold) = r.gold_label else { continue };
        match r.predicted() {
            Some(p) => {
                confusion.record(gold, p)?;
                let d = discrepancy(p, gold)?;
                scored_d.push(d);
                all_d.push(d);
            }
            None => all_d.push(MAX_DISCREPANCY),
        }
    }
    let scored = scored_d.len();
    Ok(EvaluationReport {
        scheme,
        status: status_counts(records),
        scored,
        metrics: if scored > 0 { Some(macro_metrics(&confusion)?) } else { None },
        accuracy: confusion.accuracy(),
        confusion,
        discrepancy_scored: mean(&scored_d),
        discrepancy_failures_as_max: mean(&all_d),
        judge: None,
    })
}

/// Judge every record that has an explanation graph, `workers` at a time.
pub fn judge_records(gateway: &Gateway, records: &[RunRecord], workers: usize) -> JudgeSummary {
    let items: Vec<&RunRecord> =
        records.iter().filter(|r| r.explanation_graph.is_some() && r.gold_label.is_some()).collect();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, Option<JudgeScores>, TokenLedger)>> = Mutex::default();
    std::thread::scope(|s| {
        for _ in 0..workers.max(1).min(items.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(r) = items.get(i) else { break };
                let session = gateway.session();
                let scores = r
                    .explanation_graph
                    .as_ref()
                    .and_then(|v| parse_structured(&v.to_string()).ok())
                    .and_then(|g| {
                        let gold = r.gold_label.expect("filtered on gold");
                        judge_explanation(&session, &r.claim, gold, &g.judge_text())
                            .inspect_err(|e| log::warn!("judging {} failed: {e}", r.id))
                            .ok()
                    });
                results.lock().unwrap().push((i, scores, session.ledger()));
            });
        }
    });
    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|(i, _, _)| *i);
    let mut usage = TokenLedger::new();
    for (_, _, l) in &results {
        usage.merge(l);
    }
    let scores: Vec<JudgeScores> = results.iter().filter_map(|(_, s, _)| *s).collect();
    JudgeSummary { aggregate: JudgeAggregate::from_scores(&scores), failures: results.len() - scores.len(), usage }
}

pub fn evaluate_run(run_dir: &Path, judge: Option<(&Gateway, usize)>) -> anyhow::Result<EvaluationReport> {
    let info = read_run_info(run_dir)?;
    let records = read_run_records(run_dir)?;
    if records.is_empty() {
        bail!("{} has no run records", run_dir.display());
    }
    let mut report = evaluate_records(info.scheme, &records)?;
    if let Some((gw, workers)) = judge {
        report.judge = Some(judge_records(gw, &records, workers));
    }
    Ok(report)
}

/// Write `evaluation.json` and `cost.json` into the run directory.
pub fn write_reports(run_dir: &Path) -> anyhow::Result<(EvaluationReport, CostReport)> {
    let eval = evaluate_run(run_dir, None)?;
    let cost = cost_report(run_dir, None)?;
    std::fs::write(run_dir.join(EVALUATION_FILE), serde_json::to_string_pretty(&eval)?)?;
    std::fs::write(run_dir.join(COST_FILE), serde_json::to_string_pretty(&cost)?)?;
    Ok((eval, cost))
}

fn pct(x: f64) -> String {
    format!("{:.2}", x * 100.0)
}

impl EvaluationReport {
    pub fn table(&self) -> String {
        let mut s = String::new();
        let st = &self.status;
        let _ = writeln!(
            s,
            "records {}  completed {}  partial {}  failed {}  scored {}",
            st.total, st.completed, st.partial, st.failed, self.scored
        );
        for (stage, n) in &st.failed_by_stage {
            let _ = writeln!(s, "  not completed at {stage}: {n}");
        }
        if let Some(m) = &self.metrics {
            let _ = writeln!(s, "\n{:<14}{:>10}{:>10}{:>10}{:>9}", "label", "precision", "recall", "f1", "support");
            for (name, c) in self.scheme.labels().iter().zip(&m.per_class) {
                let _ = writeln!(
                    s,
                    "{:<14}{:>10}{:>10}{:>10}{:>9}",
                    name,
                    pct(c.precision),
                    pct(c.recall),
                    pct(c.f1),
                    c.support
                );
            }
            let _ = writeln!(s, "{:<14}{:>10}{:>10}{:>10}", "macro", pct(m.precision), pct(m.recall), pct(m.f1));
        }
        if let Some(a) = self.accuracy {
            let _ = writeln!(s, "accuracy {}", pct(a));
        }
        if let (Some(a), Some(b)) = (self.discrepancy_scored, self.discrepancy_failures_as_max) {
            let _ = writeln!(s, "mean discrepancy {a:.3} (scored only), {b:.3} (failures at {MAX_DISCREPANCY})");
        }
        if let Some(j) = &self.judge {
            let a = &j.aggregate;
            let _ = writeln!(
                s,
                "judge over {} graphs ({} failed): misleadingness {:.2}  informativeness {:.2}  soundness {:.2}  readability {:.2}",
                a.count, j.failures, a.misleadingness, a.informativeness, a.soundness, a.readability
            );
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostRow {
    pub stage: Stage,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub cost: Cost,
    pub avg_input_tokens: f64,
    pub avg_output_tokens: f64,
    pub avg_cost: Cost,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub claims: usize,
    pub pricing: Pricing,
    pub rows: Vec<CostRow>,
    pub total_usage: TokenUsage,
    pub total_cost: Cost,
    pub avg_cost_per_claim: Cost,
    /// Mean component latencies; retrieval and explanation are per unit.
    pub latency: LatencyProfile,
    /// Mean over claims of the latency estimate at each claim's own size.
    pub estimated_seconds_per_claim: f64,
}

fn per_unit(total: Option<f64>, units: usize) -> Option<f64> {
    total.map(|t| t / units.max(1) as f64)
}

pub fn latency_profile(records: &[RunRecord]) -> LatencyProfile {
    let col = |f: &dyn Fn(&RunRecord) -> Option<f64>| {
        let v: Vec<f64> = records.iter().filter_map(f).collect();
        mean(&v).unwrap_or(0.0)
    };
    LatencyProfile {
        decomposition: col(&|r| r.durations.decomposition),
        relation: col(&|r| r.durations.relation),
        retrieval: col(&|r| per_unit(r.durations.retrieval, r.n)),
        competing: col(&|r| per_unit(r.durations.competing, r.n)),
        prediction: col(&|r| r.durations.prediction),
        final_explanation: col(&|r| r.durations.final_explanation),
    }
}

pub fn cost_records(records: &[RunRecord], pricing: Pricing) -> anyhow::Result<CostReport> {
    if records.is_empty() {
        bail!("no run records to cost");
    }
    let mut ledger = TokenLedger::new();
    for r in records {
        ledger.merge(&r.usage);
    }
    let claims = records.len();
    let per = claims as f64;
    let rows = ledger
        .iter()
        .map(|(stage, u)| {
            let cost = pricing.cost(u);
            CostRow {
                stage,
                input_tokens: u.input_tokens,
                output_tokens: u.output_tokens,
                cost,
                avg_input_tokens: u.input_tokens as f64 / per,
                avg_output_tokens: u.output_tokens as f64 / per,
                avg_cost: cost.per(claims as u64),
            }
        })
        .collect();
    let total_usage = ledger.total();
    let total_cost = pricing.cost(total_usage);
    let latency = latency_profile(records);
    let estimates: Vec<f64> = records.iter().map(|r| latency.estimate(r.n.max(1))).collect();
    Ok(CostReport {
        claims,
        pricing,
        rows,
        total_usage,
        total_cost,
        avg_cost_per_claim: total_cost.per(claims as u64),
        latency,
        estimated_seconds_per_claim: mean(&estimates).unwrap_or(0.0),
    })
}

pub fn cost_report(run_dir: &Path, pricing: Option<Pricing>) -> anyhow::Result<CostReport> {
    let info = read_run_info(run_dir)?;
    let records = read_run_records(run_dir)?;
    if records.is_empty() {
        bail!("{} has no run records", run_dir.display());
    }
    cost_records(&records, pricing.unwrap_or(info.config.pricing))
}

impl CostReport {
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<30}{:>14}{:>14}{:>14}{:>14}",
            "stage", "input tokens", "output tokens", "cost", "avg per claim"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<30}{:>14}{:>14}{:>14}{:>14}",
                r.stage.title(),
                r.input_tokens,
                r.output_tokens,
                r.cost.to_string(),
                r.avg_cost.to_string()
            );
        }
        let _ = writeln!(
            s,
            "{:<30}{:>14}{:>14}{:>14}{:>14}",
            "total",
            self.total_usage.input_tokens,
            self.total_usage.output_tokens,
            self.total_cost.to_string(),
            self.avg_cost_per_claim.to_string()
        );
        let l = &self.latency;
        let _ = writeln!(
            s,
            "\nlatency (s): decomposition {:.3}  relations {:.3}  retrieval/unit {:.3}  explanations/unit {:.3}  prediction {:.3}  final {:.3}",
            l.decomposition, l.relation, l.retrieval, l.competing, l.prediction, l.final_explanation
        );
        let _ = writeln!(s, "estimated per claim: {:.3} s over {} claims", self.estimated_seconds_per_claim, self.claims);
        s
    }
}
