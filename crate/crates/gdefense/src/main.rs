use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context as _};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gdefense::config::{Ablation, GraphVariant, InferencePath, PipelineConfig, PromptVariant, ProviderKind};
use gdefense::dataset::{dataset_stats, load_dataset, write_reject_log, DatasetManifest};
use gdefense::pipeline::{read_run_info, read_run_records, record_file_name, BatchOptions, Pipeline, RECORDS_DIR};
use gdefense::providers::write_fixture_file;
use gdefense::report::{cost_report, evaluate_run, EVALUATION_FILE};
use gdefense_core::record::{ClaimRecord, Report};
use gdefense_core::summary::{export_dot, parse_structured};
use gdefense_core::{Pricing, VeracityScheme};

#[derive(Parser)]
#[command(name = "gdefense", version, about = "Claim-graph fact verification with competing explanations")]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a dataset and print its statistics.
    Ingest {
        manifest: PathBuf,
        /// Where to write rejected records (default: next to the manifest).
        #[arg(long)]
        rejects: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Run the pipeline on a dataset or on a single claim.
    Run(RunArgs),
    /// Score a run directory.
    Evaluate {
        run_dir: PathBuf,
        /// Also rate each explanation graph with the judge model.
        #[arg(long)]
        judge: bool,
        #[command(flatten)]
        settings: Settings,
        #[arg(long)]
        json: bool,
    },
    /// Token, cost and latency report for a run directory.
    Cost {
        run_dir: PathBuf,
        /// Dollars per million input tokens.
        #[arg(long, requires = "output_price")]
        input_price: Option<f64>,
        /// Dollars per million output tokens.
        #[arg(long, requires = "input_price")]
        output_price: Option<f64>,
        #[arg(long)]
        json: bool,
    },
    /// Export one claim's explanation graph.
    Export {
        run_dir: PathBuf,
        id: String,
        #[arg(long, value_enum, default_value_t = ExportFormat::Dot)]
        format: ExportFormat,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportFormat {
    Dot,
    Structured,
}

/// Overrides for the configuration file.
#[derive(Args, Default)]
struct Settings {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    provider: Option<ProviderKind>,
    /// Fixture directory for `--provider fixtures`.
    #[arg(long)]
    fixtures: Option<PathBuf>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    no_cache: bool,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    max_in_flight: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    /// Dataset manifest for a batch run.
    #[arg(long, conflicts_with = "claim")]
    manifest: Option<PathBuf>,
    /// A single claim to verify instead of a dataset.
    #[arg(long, requires = "scheme")]
    claim: Option<String>,
    /// Raw report text files for `--claim`.
    #[arg(long = "report")]
    reports: Vec<PathBuf>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    /// Only these claim ids from the dataset.
    #[arg(long = "only")]
    only: Vec<String>,
    /// Directory that holds run directories.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Stop after this many newly processed claims.
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_enum)]
    prompt_variant: Option<PromptVariant>,
    #[arg(long, value_enum)]
    graph_variant: Option<GraphVariant>,
    #[arg(long)]
    background: bool,
    #[arg(long = "ablation", value_enum)]
    ablations: Vec<Ablation>,
    #[arg(long, value_enum)]
    inference_path: Option<InferencePath>,
    #[arg(long)]
    claims_in_flight: Option<usize>,
    /// Save every provider exchange to this fixture directory.
    #[arg(long)]
    record_fixtures: Option<PathBuf>,
    #[command(flatten)]
    settings: Settings,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    ThreeWay,
    SixWay,
}

impl From<SchemeArg> for VeracityScheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::ThreeWay => VeracityScheme::ThreeWay,
            SchemeArg::SixWay => VeracityScheme::SixWay,
        }
    }
}

fn load_config(s: &Settings, base: Option<PipelineConfig>) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match (&s.config, base) {
        (Some(path), _) => PipelineConfig::from_file(path)?,
        (None, Some(b)) => b,
        (None, None) => PipelineConfig::default(),
    };
    cfg.apply_env();
    if let Some(p) = s.provider {
        cfg.provider.kind = p;
    }
    if let Some(f) = &s.fixtures {
        cfg.provider.fixtures = Some(f.clone());
    }
    if let Some(c) = &s.cache_dir {
        cfg.cache_dir = Some(c.clone());
    }
    if s.no_cache {
        cfg.cache_dir = None;
    }
    if let Some(m) = &s.model {
        cfg.model = m.clone();
    }
    if let Some(n) = s.max_in_flight {
        cfg.max_in_flight = n;
    }
    Ok(cfg)
}

fn ingest(manifest: &Path, rejects: Option<PathBuf>, json: bool) -> anyhow::Result<bool> {
    let m = DatasetManifest::load(manifest)?;
    let d = load_dataset(&m)?;
    let reject_path = rejects.unwrap_or_else(|| manifest.with_extension("rejects.jsonl"));
    write_reject_log(&reject_path, &d.rejects)?;
    let stats = dataset_stats(m.scheme, &d.records);
    let mismatches = stats.mismatches(&m.expected, d.rejects.len());
    if json {
        let out = serde_json::json!({
            "name": m.name, "scheme": m.scheme, "split": m.split, "stats": stats,
            "rejects": d.rejects.len(), "mismatches": mismatches,
        });
        println!("{}", serde_json::to_string_pretty(&out)?);
    } else {
        println!("{} ({}, {})", m.name, m.scheme, m.split.as_str());
        print!("{}", stats.table());
        println!("rejected {} (log: {})", d.rejects.len(), reject_path.display());
        for msg in &mismatches {
            println!("mismatch: {msg}");
        }
    }
    Ok(mismatches.is_empty())
}

fn run(args: RunArgs) -> anyhow::Result<bool> {
    let mut cfg = load_config(&args.settings, None)?;
    if let Some(k) = args.k {
        cfg.k = k;
    }
    if let Some(v) = args.prompt_variant {
        cfg.prompt_variant = v;
    }
    if let Some(v) = args.graph_variant {
        cfg.graph_variant = v;
    }
    cfg.background |= args.background;
    cfg.ablations.extend(args.ablations.iter().copied());
    if let Some(p) = args.inference_path {
        cfg.inference_path = p;
    }
    if let Some(n) = args.claims_in_flight {
        cfg.claims_in_flight = n;
    }
    let cfg = cfg.normalized();
    cfg.validate()?;

    let (gateway, recorder) = if args.record_fixtures.is_some() {
        let (g, r) = cfg.build_recording_gateway()?;
        (g, Some(r))
    } else {
        (cfg.build_gateway()?, None)
    };
    let embedder = cfg.build_embedder()?;
    let adapter = cfg.build_adapter()?;

    let ok = if let Some(text) = &args.claim {
        let scheme: VeracityScheme = args.scheme.expect("clap requires scheme").into();
        let reports = args
            .reports
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let raw = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                Ok(Report::from_text(i, &raw)?)
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        let record = ClaimRecord::new("claim", text.as_str(), None, reports, true)?;
        let p = Pipeline {
            config: &cfg,
            gateway: &gateway,
            embedder: embedder.as_ref(),
            adapter: adapter.as_deref().map(|a| a as _),
            scheme,
        };
        let rr = p.run_claim(&record);
        println!("{}", serde_json::to_string_pretty(&rr)?);
        rr.prediction.is_some()
    } else {
        let Some(manifest) = &args.manifest else { bail!("give --manifest or --claim") };
        let m = DatasetManifest::load(manifest)?;
        let mut d = load_dataset(&m)?;
        if !d.rejects.is_empty() {
            log::warn!("{} records rejected; see `gdefense ingest`", d.rejects.len());
        }
        if !args.only.is_empty() {
            d.records.retain(|r| args.only.contains(&r.id));
        }
        let p = Pipeline {
            config: &cfg,
            gateway: &gateway,
            embedder: embedder.as_ref(),
            adapter: adapter.as_deref().map(|a| a as _),
            scheme: m.scheme,
        };
        let outcome = p.run_batch(&m.name, &d.records, &args.out, &BatchOptions { limit: args.limit })?;
        println!(
            "{}: processed {}, skipped {}, failed {} (provider calls {}, cache hits {})",
            outcome.run_dir.display(),
            outcome.processed,
            outcome.skipped,
            outcome.failed,
            gateway.provider_calls(),
            gateway.cache_hits()
        );
        outcome.failed == 0
    };
    if let (Some(dir), Some(rec)) = (&args.record_fixtures, recorder) {
        let path = write_fixture_file(dir, &rec.records())?;
        println!("fixtures written to {}", path.display());
    }
    Ok(ok)
}

fn export(run_dir: &Path, id: &str, format: ExportFormat, output: Option<PathBuf>) -> anyhow::Result<()> {
    let path = run_dir.join(RECORDS_DIR).join(record_file_name(id));
    let record = match fs::read_to_string(&path) {
        Ok(t) => serde_json::from_str::<gdefense::pipeline::RunRecord>(&t)?,
        Err(_) => read_run_records(run_dir)?
            .into_iter()
            .find(|r| r.id == id)
            .with_context(|| format!("no record for claim {id}"))?,
    };
    let value = record.explanation_graph.with_context(|| format!("claim {id} has no explanation graph"))?;
    let text = match format {
        ExportFormat::Structured => serde_json::to_string_pretty(&value)?,
        ExportFormat::Dot => export_dot(&parse_structured(&value.to_string())?),
    };
    match output {
        Some(p) => fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Ingest { manifest, rejects, json } => ingest(&manifest, rejects, json),
        Command::Run(args) => run(args),
        Command::Evaluate { run_dir, judge, settings, json } => (|| {
            let gateway = if judge {
                let info = read_run_info(&run_dir)?;
                Some(load_config(&settings, Some(info.config))?.build_gateway()?)
            } else {
                None
            };
            let workers = settings.max_in_flight.unwrap_or(8);
            let report = evaluate_run(&run_dir, gateway.as_ref().map(|g| (g, workers)))?;
            fs::write(run_dir.join(EVALUATION_FILE), serde_json::to_string_pretty(&report)?)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.table());
            }
            Ok(true)
        })(),
        Command::Cost { run_dir, input_price, output_price, json } => (|| {
            let pricing = match (input_price, output_price) {
                (Some(i), Some(o)) => Some(Pricing::from_dollars(i, o).context("prices must be non-negative")?),
                _ => None,
            };
            let report = cost_report(&run_dir, pricing)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.table());
            }
            Ok(true)
        })(),
        Command::Export { run_dir, id, format, output } => export(&run_dir, &id, format, output).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
