//! `hallubench` command line.

pub mod resolve;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use hallubench_core::config::PipelineConfig;
use hallubench_core::dataset::{load_claims, read_jsonl, read_text, validate_dataset, write_jsonl};
use hallubench_core::detector::{
    evaluate, render_report, score_verdicts, Judge, JudgeConfig, JudgeMode, PromptJudge, ReportFormat, Triangulator,
    Verdict,
};
use hallubench_core::graph::load_triples;
use hallubench_core::model::QRSample;
use hallubench_core::pipeline::run_pipeline;
use hallubench_core::providers::GenerationParams;
use hallubench_core::retrieval::{Corpus, Searcher};
use hallubench_core::review::{export_filtered, ReviewService, TaskKind};
use hallubench_core::sampler::{batch_sample, SamplerConfig, SubgraphSample};
use hallubench_core::screening::{apply_report, dedup, LexicalEmbedder, DEFAULT_THRESHOLD};
use hallubench_core::synthesis::{synthesize, SynthesisConfig};
use hallubench_core::{Error, ExpMatchConfig, Result};
use hallubench_net::{router, serve, HttpSearcher};
use serde::Deserialize;

#[derive(Parser, Debug)]
#[command(name = "hallubench", version, about = "Build and score hallucination-detection benchmarks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sample subgraphs for every reasoning pattern.
    Sample(SampleArgs),
    /// Turn subgraphs and claims into query/response samples.
    Synthesize(SynthesizeArgs),
    /// Drop near-duplicate samples.
    Screen(ScreenArgs),
    /// Serve a review batch over HTTP, or export the filtered dataset.
    ReviewServe(ReviewArgs),
    /// Build a retrieval index from a corpus.
    Index(IndexArgs),
    /// Print the evidence block for a query.
    Search(SearchArgs),
    /// Score saved predictions against a dataset.
    Score(ScoreArgs),
    /// Run a judge over a dataset and score it.
    Evaluate(EvaluateArgs),
    /// Check a dataset file against the record schema.
    Validate { path: PathBuf },
    /// Run the configured stages end to end.
    Pipeline(PipelineArgs),
}

fn csv_set(s: &Option<String>) -> BTreeSet<String> {
    s.iter()
        .flat_map(|v| v.split(','))
        .map(|x| x.trim().to_string())
        .filter(|x| !x.is_empty())
        .collect()
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[arg(long)]
    pub triples: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub max_overlap: Option<f64>,
    /// Comma-separated relation allowlist.
    #[arg(long)]
    pub relations: Option<String>,
    #[arg(long)]
    pub numeric_relations: Option<String>,
    #[arg(long)]
    pub type_relations: Option<String>,
    #[arg(long)]
    pub setop_constraints: Option<usize>,
}

fn cmd_sample(a: &SampleArgs) -> Result<()> {
    let mut cfg = SamplerConfig {
        k: a.k,
        n: a.n,
        seed: a.seed,
        relation_allowlist: csv_set(&a.relations),
        numeric_relations: csv_set(&a.numeric_relations),
        ..SamplerConfig::default()
    };
    if a.type_relations.is_some() {
        cfg.type_relations = csv_set(&a.type_relations);
    }
    if let Some(m) = a.max_overlap {
        cfg.max_overlap = m;
    }
    if let Some(c) = a.setop_constraints {
        cfg.setop_constraints = c;
    }
    cfg.validate()?;
    let (kg, report) = load_triples(&a.triples, &cfg.relation_allowlist)?;
    log::info!(
        "event=triples_loaded accepted={} filtered={} rejected={}",
        report.accepted,
        report.filtered,
        report.rejects.len()
    );
    let samples = batch_sample(&kg, &cfg)?;
    write_jsonl(&a.out, &samples)?;
    log::info!("event=sampled count={} out={}", samples.len(), a.out.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct SynthesizeArgs {
    #[arg(long)]
    pub subgraphs: Option<PathBuf>,
    #[arg(long)]
    pub claims: Option<PathBuf>,
    #[arg(long, default_value = "mock")]
    pub provider: String,
    /// Judge for the claim difficulty pre-screen.
    #[arg(long)]
    pub judge: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub no_prescreen: bool,
    #[arg(long, default_value_t = 4)]
    pub max_in_flight: usize,
}

fn cmd_synthesize(a: &SynthesizeArgs) -> Result<()> {
    if a.subgraphs.is_none() && a.claims.is_none() {
        return Err(Error::contract("give --subgraphs, --claims, or both"));
    }
    let subgraphs: Vec<SubgraphSample> = match &a.subgraphs {
        Some(p) => read_jsonl(p)?,
        None => Vec::new(),
    };
    let claims = match &a.claims {
        Some(p) => {
            let (c, rejected) = load_claims(p)?;
            if rejected > 0 {
                log::warn!("event=claims_rejected count={rejected}");
            }
            c
        }
        None => Vec::new(),
    };
    let provider = resolve::text_provider(&a.provider, "generator")?;
    let judge = a.judge.as_deref().map(|s| resolve::text_provider(s, "judge")).transpose()?;
    let cfg = SynthesisConfig {
        prescreen: !a.no_prescreen,
        max_in_flight: a.max_in_flight,
        ..SynthesisConfig::default()
    };
    let (samples, report) = synthesize(provider.as_ref(), judge.as_deref(), &subgraphs, &claims, &cfg)?;
    write_jsonl(&a.out, &samples)?;
    if let Some(r) = &a.report {
        std::fs::write(r, serde_json::to_string_pretty(&report)?)?;
    }
    log::info!(
        "event=synthesized samples={} dropped={} out={}",
        samples.len(),
        report.dropped.len(),
        a.out.display()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct ScreenArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// `lexical`, `http`, an embedding endpoint URL, or `replay:<path>`.
    #[arg(long, default_value = "lexical")]
    pub embedder: String,
}

fn cmd_screen(a: &ScreenArgs) -> Result<()> {
    let samples: Vec<QRSample> = read_jsonl(&a.input)?;
    let report = match resolve::embedder(&a.embedder)? {
        Some(e) => dedup::<f64>(&samples, e.as_ref(), a.threshold)?,
        None => dedup::<f64>(&samples, &LexicalEmbedder::for_samples(&samples), a.threshold)?,
    };
    let kept = apply_report(&samples, &report);
    write_jsonl(&a.out, &kept)?;
    if let Some(r) = &a.report {
        std::fs::write(r, serde_json::to_string_pretty(&report)?)?;
    }
    log::info!("event=screened kept={} removed={}", kept.len(), report.removed.len());
    Ok(())
}

#[derive(Args, Debug)]
pub struct ReviewArgs {
    #[arg(long)]
    pub batch: PathBuf,
    /// One annotator id per line; `#` starts a comment line.
    #[arg(long)]
    pub roster: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub groups: usize,
    #[arg(long, default_value_t = hallubench_core::review::DEFAULT_QUORUM)]
    pub quorum: usize,
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long, default_value = "batch")]
    pub batch_id: String,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Static UI assets served at `/`.
    #[arg(long)]
    pub ui: Option<PathBuf>,
    /// Write the reviewed dataset here instead of serving.
    #[arg(long)]
    pub export: Option<PathBuf>,
}

pub fn parse_roster(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

fn cmd_review(a: &ReviewArgs) -> Result<()> {
    let svc = Arc::new(ReviewService::open(&a.log)?);
    let source = read_text(&a.batch)?;
    if svc.snapshot().batch(&a.batch_id).is_none() {
        let samples: Vec<QRSample> = hallubench_core::dataset::parse_jsonl(&source)?;
        let roster = parse_roster(&read_text(&a.roster)?);
        let ids = svc.create_batch(&a.batch_id, TaskKind::Quality, &samples, &roster, a.groups, a.quorum)?;
        log::info!("event=batch_created batch={} tasks={}", a.batch_id, ids.len());
    }
    if let Some(out) = &a.export {
        let decision = svc.summary(&a.batch_id)?;
        let (text, report) = export_filtered(&decision, &source)?;
        std::fs::write(out, text)?;
        log::info!("event=exported kept={} discarded={}", report.kept, report.discarded);
        return Ok(());
    }
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .map_err(|e| Error::contract(format!("bad listen address: {e}")))?;
    let server = serve(addr, router(svc, a.ui.clone()))?;
    eprintln!("review server on {}", server.url());
    server.wait();
    Ok(())
}

#[derive(Args, Debug)]
pub struct IndexArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SearchArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub query: String,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[arg(long)]
    pub gold: PathBuf,
    /// JSONL of `{"id", "output"}` records.
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long, default_value_t = 0.7)]
    pub alpha: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "predictions")]
    pub judge: String,
}

#[derive(Deserialize)]
struct RawPrediction {
    id: String,
    output: String,
}

fn cmd_score(a: &ScoreArgs) -> Result<()> {
    let gold: Vec<QRSample> = read_jsonl(&a.gold)?;
    let preds: Vec<RawPrediction> = read_jsonl(&a.pred)?;
    let verdicts: BTreeMap<String, Verdict> = preds
        .into_iter()
        .map(|p| (p.id, Verdict::from_text(&p.output, &a.judge)))
        .collect();
    let report = score_verdicts(&a.judge, &gold, &verdicts, &ExpMatchConfig::new(a.alpha)?)?;
    if let Some(out) = &a.out {
        std::fs::write(out, serde_json::to_string_pretty(&report)?)?;
    }
    emit(&render_report(&[report], ReportFormat::Table)?);
    Ok(())
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// zero, icl, tool, guardian or triangulate.
    #[arg(long, default_value = "zero")]
    pub mode: String,
    #[arg(long, default_value = "mock")]
    pub provider: String,
    #[arg(long, default_value = "mock")]
    pub guardian: String,
    #[arg(long, default_value = "mock")]
    pub manager: String,
    /// Index directory for tool and triangulate modes.
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// `http` to use the external search adapter instead of a local index.
    #[arg(long)]
    pub search: Option<String>,
    #[arg(long)]
    pub inject_facts: bool,
    #[arg(long)]
    pub omit_query: bool,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value = "table")]
    pub format: String,
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long, default_value_t = 0.7)]
    pub alpha: f64,
    #[arg(long, default_value_t = 4)]
    pub max_in_flight: usize,
}

fn searcher(index: &Option<PathBuf>, search: &Option<String>) -> Result<Option<Arc<dyn Searcher>>> {
    match (search.as_deref(), index) {
        (Some("http"), _) => Ok(Some(Arc::new(HttpSearcher::from_env()?))),
        (Some(other), _) => Err(Error::contract(format!("unknown search backend {other:?}"))),
        (None, Some(dir)) => Ok(Some(Arc::new(Corpus::load_index(dir)?))),
        (None, None) => Ok(None),
    }
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let mode: JudgeMode = a.mode.parse()?;
    let format: ReportFormat = a.format.parse()?;
    let data: Vec<QRSample> = read_jsonl(&a.data)?;
    let searcher = searcher(&a.index, &a.search)?;
    let judge: Box<dyn Judge> = match mode {
        JudgeMode::Triangulate => {
            if a.inject_facts || a.omit_query {
                return Err(Error::contract("ablation flags are not supported with triangulation"));
            }
            Box::new(Triangulator {
                seeker: resolve::text_provider(&a.provider, "seeker")?,
                guardian: resolve::text_provider(&a.guardian, "guardian")?,
                manager: resolve::text_provider(&a.manager, "manager")?,
                searcher: searcher.ok_or_else(|| Error::contract("triangulate needs --index or --search"))?,
                params: GenerationParams::EVALUATION,
            })
        }
        _ => {
            let provider = if mode == JudgeMode::Guardian {
                resolve::text_provider(&a.guardian, "guardian")?
            } else {
                resolve::text_provider(&a.provider, "judge")?
            };
            let cfg = JudgeConfig {
                inject_facts: a.inject_facts,
                omit_query: a.omit_query,
                ..JudgeConfig::new(mode)
            };
            Box::new(PromptJudge::new(provider, cfg, searcher)?)
        }
    };
    let (report, predictions) = evaluate::<f64>(&data, judge.as_ref(), &ExpMatchConfig::new(a.alpha)?, a.max_in_flight)?;
    if let Some(p) = &a.predictions {
        write_jsonl(p, &predictions)?;
    }
    let rendered = render_report(&[report], format)?;
    match &a.report {
        Some(path) => std::fs::write(path, &rendered)?,
        None => emit(&rendered),
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct PipelineArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the configured output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `http` to use the external search adapter.
    #[arg(long)]
    pub search: Option<String>,
}

fn cmd_pipeline(a: &PipelineArgs) -> Result<()> {
    let mut cfg = PipelineConfig::load(&a.config)?;
    if let Some(out) = &a.out {
        cfg.out_dir = out.clone();
    }
    let mut providers = resolve::providers(&cfg.providers)?;
    providers.searcher = searcher(&None, &a.search)?;
    match run_pipeline(&cfg, &providers) {
        Ok(m) => {
            emit(&serde_json::to_string_pretty(&m)?);
            Ok(())
        }
        Err(f) => {
            log::error!("event=stage_failed stage={}", f.stage);
            Err(f.source)
        }
    }
}

/// Writes a line to stdout; a closed pipe is not an error.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{text}").and_then(|_| out.flush());
}

fn dispatch(cmd: &Command) -> Result<i32> {
    match cmd {
        Command::Sample(a) => cmd_sample(a)?,
        Command::Synthesize(a) => cmd_synthesize(a)?,
        Command::Screen(a) => cmd_screen(a)?,
        Command::ReviewServe(a) => cmd_review(a)?,
        Command::Index(a) => {
            let corpus = Corpus::load(&a.corpus)?;
            corpus.save(&a.out)?;
            log::info!("event=indexed documents={} out={}", corpus.len(), a.out.display());
        }
        Command::Search(a) => emit(&Corpus::load_index(&a.index)?.search(&a.query)?),
        Command::Score(a) => cmd_score(a)?,
        Command::Evaluate(a) => cmd_evaluate(a)?,
        Command::Validate { path } => {
            let report = validate_dataset(path)?;
            emit(&serde_json::to_string_pretty(&report)?);
            if !report.is_clean() {
                return Ok(1);
            }
        }
        Command::Pipeline(a) => cmd_pipeline(a)?,
    }
    Ok(0)
}

/// Parses `args` (program name first) and runs the command. Returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roster_lines() {
        assert_eq!(parse_roster("# team\nann1\n\n  ann2 \n#x\n"), vec!["ann1", "ann2"]);
    }

    #[test]
    fn comma_sets() {
        let s = csv_set(&Some("a, b,,a".into()));
        assert_eq!(s.into_iter().collect::<Vec<_>>(), vec!["a", "b"]);
        assert!(csv_set(&None).is_empty());
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["hallubench", "nope"]), 1);
        assert_eq!(run(["hallubench", "--help"]), 0);
    }
}
