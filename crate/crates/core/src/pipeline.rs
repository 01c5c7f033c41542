//! Sequential stage runner: sample, synthesize, screen, review, evaluate.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use crate::config::{PipelineConfig, STAGES};
use crate::dataset::{check_record, file_sha256, load_claims, read_jsonl, read_text, sha256_hex, to_jsonl};
use crate::detector::{
    evaluate, render_report, Judge, JudgeConfig, JudgeMode, PromptJudge, ReportFormat, Triangulator,
};
use crate::error::{Error, Result};
use crate::graph::load_triples;
use crate::metrics::{leading_label, split_sentences, ExpMatchConfig};
use crate::model::QRSample;
use crate::providers::{GenerationParams, MockProvider, TextProvider};
use crate::retrieval::{Corpus, Searcher};
use crate::review::{export_filtered, Facet, FacetVerdict, ReviewService, TaskKind};
use crate::sampler::{batch_sample, SubgraphSample};
use crate::screening::{apply_report, dedup, EmbeddingProvider, LexicalEmbedder};
use crate::synthesis::synthesize;

pub const SUBGRAPHS: &str = "subgraphs.jsonl";
pub const SYNTHESIZED: &str = "synthesized.jsonl";
pub const SCREENED: &str = "screened.jsonl";
pub const REVIEW_LOG: &str = "review_log.jsonl";
pub const REVIEWED: &str = "reviewed.jsonl";
pub const PREDICTIONS: &str = "predictions.jsonl";
pub const MANIFEST: &str = "manifest.json";
pub const REVIEW_BATCH: &str = "pipeline";

pub struct Providers {
    pub generator: Arc<dyn TextProvider>,
    pub judge: Arc<dyn TextProvider>,
    pub guardian: Arc<dyn TextProvider>,
    pub manager: Arc<dyn TextProvider>,
    /// Lexical embeddings fitted on the screened samples when absent.
    pub embedder: Option<Arc<dyn EmbeddingProvider<f64>>>,
    /// Takes precedence over the configured corpus.
    pub searcher: Option<Arc<dyn Searcher>>,
}

impl Providers {
    pub fn mock() -> Self {
        Self {
            generator: Arc::new(MockProvider::new("generator")),
            judge: Arc::new(MockProvider::new("judge")),
            guardian: Arc::new(MockProvider::new("guardian")),
            manager: Arc::new(MockProvider::new("manager")),
            embedder: None,
            searcher: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InputRecord {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StageRecord {
    pub name: String,
    pub duration_ms: f64,
    pub counts: BTreeMap<String, usize>,
    /// Output file name to sha256.
    pub outputs: BTreeMap<String, String>,
}

impl StageRecord {
    fn count(&mut self, key: &str, n: usize) {
        self.counts.insert(key.to_string(), n);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageError {
    pub stage: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub seed: u64,
    pub config: PipelineConfig,
    pub inputs: BTreeMap<String, InputRecord>,
    pub stages: Vec<StageRecord>,
    pub failed: Option<StageError>,
}

impl Manifest {
    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    /// Every output hash across stages, keyed by file name.
    pub fn output_hashes(&self) -> BTreeMap<String, String> {
        self.stages
            .iter()
            .flat_map(|s| s.outputs.clone())
            .collect()
    }
}

#[derive(Debug, thiserror::Error)]
#[error("stage {stage} failed: {source}")]
pub struct StageFailure {
    pub stage: String,
    #[source]
    pub source: Error,
    pub manifest: Box<Manifest>,
}

struct Run<'a> {
    cfg: &'a PipelineConfig,
    providers: &'a Providers,
    inputs: BTreeMap<String, InputRecord>,
}

impl Run<'_> {
    fn out(&self, name: &str) -> PathBuf {
        self.cfg.out_dir.join(name)
    }

    fn write(&self, rec: &mut StageRecord, name: &str, contents: &str) -> Result<()> {
        fs::write(self.out(name), contents)?;
        rec.outputs.insert(name.to_string(), sha256_hex(contents.as_bytes()));
        Ok(())
    }

    fn write_json<T: Serialize>(&self, rec: &mut StageRecord, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(rec, name, &text)
    }

    fn input(&mut self, key: &str, path: &Path) -> Result<()> {
        let sha256 = file_sha256(path)?;
        self.inputs.insert(key.to_string(), InputRecord {
            path: path.to_path_buf(),
            sha256,
        });
        Ok(())
    }

    fn sample(&mut self, rec: &mut StageRecord) -> Result<()> {
        let cfg = self.cfg;
        self.input("triples", &cfg.triples)?;
        let (kg, load) = load_triples(&cfg.triples, &cfg.sampler.relation_allowlist)?;
        rec.count("triples_accepted", load.accepted);
        rec.count("triples_rejected", load.rejects.len());
        let samples = batch_sample(&kg, &cfg.sampler)?;
        for s in &samples {
            *rec.counts.entry(format!("subgraphs_{}", s.pattern)).or_insert(0) += 1;
        }
        rec.count("subgraphs", samples.len());
        self.write(rec, SUBGRAPHS, &to_jsonl(&samples)?)
    }

    fn synthesize(&mut self, rec: &mut StageRecord) -> Result<()> {
        let cfg = self.cfg;
        let subgraphs: Vec<SubgraphSample> = read_jsonl(&self.out(SUBGRAPHS))?;
        let claims = match &cfg.claims {
            Some(path) => {
                self.input("claims", path)?;
                let (claims, rejected) = load_claims(path)?;
                rec.count("claims_rejected", rejected);
                claims
            }
            None => Vec::new(),
        };
        let (samples, report) = synthesize(
            self.providers.generator.as_ref(),
            Some(self.providers.judge.as_ref()),
            &subgraphs,
            &claims,
            &cfg.synthesis,
        )?;
        rec.count("claims_prescreened_out", report.claims_prescreened_out);
        rec.count("dropped", report.dropped.len());
        rec.count("samples", samples.len());
        self.write(rec, SYNTHESIZED, &to_jsonl(&samples)?)?;
        self.write_json(rec, "synthesis_report.json", &report)
    }

    fn screen(&mut self, rec: &mut StageRecord) -> Result<()> {
        let samples: Vec<QRSample> = read_jsonl(&self.out(SYNTHESIZED))?;
        let report = match &self.providers.embedder {
            Some(e) => dedup(&samples, e.as_ref(), self.cfg.screen_threshold)?,
            None => dedup(
                &samples,
                &LexicalEmbedder::for_samples(&samples),
                self.cfg.screen_threshold,
            )?,
        };
        let kept = apply_report(&samples, &report);
        rec.count("kept", kept.len());
        rec.count("removed", report.removed.len());
        self.write(rec, SCREENED, &to_jsonl(&kept)?)?;
        self.write_json(rec, "screen_report.json", &report)
    }

    fn review(&mut self, rec: &mut StageRecord) -> Result<()> {
        let r = &self.cfg.review;
        let source = read_text(&self.out(SCREENED))?;
        let samples: Vec<QRSample> = crate::dataset::parse_jsonl(&source)?;
        let log = self.out(REVIEW_LOG);
        if log.exists() {
            fs::remove_file(&log)?;
        }
        let service = ReviewService::open(&log)?;
        let ids = service.create_batch(REVIEW_BATCH, TaskKind::Quality, &samples, &r.roster, r.groups, r.quorum)?;
        rec.count("tasks", ids.len());
        if r.simulate {
            let state = service.snapshot();
            for id in &ids {
                let task = state.task(*id).expect("task just created");
                let (pc, rf, el) = rule_facets(&task.sample);
                for annotator in &task.annotators {
                    let mut v = FacetVerdict::quality(annotator, pc, rf, el);
                    v.timestamp = Some(0);
                    service.submit(*id, v)?;
                }
            }
        }
        drop(service);
        rec.outputs.insert(REVIEW_LOG.into(), file_sha256(&log)?);
        let decision = crate::review::ReviewState::replay(&crate::review::parse_log(&read_text(&log)?)?)?
            .decision(REVIEW_BATCH)?;
        rec.count("kept", decision.kept.len());
        rec.count("discarded", decision.discarded.len());
        rec.count("pending", decision.pending.len());
        self.write_json(rec, "review_summary.json", &decision)?;
        if decision.is_complete() {
            let (filtered, _) = export_filtered(&decision, &source)?;
            self.write(rec, REVIEWED, &filtered)?;
        } else {
            log::warn!(
                "event=review_pending batch={REVIEW_BATCH} pending={} log={}",
                decision.pending.len(),
                log.display()
            );
        }
        Ok(())
    }

    fn searcher(&mut self) -> Result<Option<Arc<dyn Searcher>>> {
        if let Some(s) = &self.providers.searcher {
            return Ok(Some(s.clone()));
        }
        match self.cfg.corpus.clone() {
            Some(path) => {
                self.input("corpus", &path)?;
                Ok(Some(Arc::new(Corpus::load(&path)?)))
            }
            None => Ok(None),
        }
    }

    fn evaluate(&mut self, rec: &mut StageRecord) -> Result<()> {
        let e = &self.cfg.evaluate;
        let path = self.out(REVIEWED);
        if !path.exists() {
            return Err(Error::contract(format!(
                "{} missing; the review batch is not decided",
                path.display()
            )));
        }
        let dataset: Vec<QRSample> = read_jsonl(&path)?;
        let needs_search = matches!(e.mode, JudgeMode::Tool | JudgeMode::Triangulate);
        let searcher = if needs_search { self.searcher()? } else { None };
        let judge: Box<dyn Judge> = if e.mode == JudgeMode::Triangulate {
            Box::new(Triangulator {
                seeker: self.providers.judge.clone(),
                guardian: self.providers.guardian.clone(),
                manager: self.providers.manager.clone(),
                searcher: searcher.ok_or_else(|| Error::contract("triangulation needs paths.corpus"))?,
                params: GenerationParams::EVALUATION,
            })
        } else {
            let jc = JudgeConfig {
                inject_facts: e.inject_facts,
                omit_query: e.omit_query,
                ..JudgeConfig::new(e.mode)
            };
            Box::new(PromptJudge::new(self.providers.judge.clone(), jc, searcher)?)
        };
        let (report, predictions) =
            evaluate::<f64>(&dataset, judge.as_ref(), &ExpMatchConfig::new(e.alpha)?, e.max_in_flight)?;
        rec.count("samples", report.samples);
        rec.count("parse_failures", report.parse_failures);
        self.write(rec, PREDICTIONS, &to_jsonl(&predictions)?)?;
        self.write_json(rec, "report.json", &report)?;
        self.write(rec, "report.txt", &render_report(&[report], ReportFormat::Table)?)
    }
}

/// Facets a rule-based panel assigns: schema-valid record, explanation leading
/// with the gold label, explanation with at least one supporting sentence.
pub fn rule_facets(sample: &QRSample) -> (Facet, Facet, Facet) {
    let pass = |ok: bool| if ok { Facet::Pass } else { Facet::Fail };
    (
        pass(check_record(sample).is_ok()),
        pass(leading_label(&sample.explanation) == Some(sample.label)),
        pass(split_sentences(&sample.explanation).len() >= 2),
    )
}

/// Runs the enabled stages in order. Each stage reads its predecessor's output
/// from `out_dir`; `manifest.json` is written on success and on failure.
pub fn run_pipeline(cfg: &PipelineConfig, providers: &Providers) -> std::result::Result<Manifest, StageFailure> {
    let mut manifest = Manifest {
        seed: cfg.seed,
        config: cfg.clone(),
        inputs: BTreeMap::new(),
        stages: Vec::new(),
        failed: None,
    };
    let mut run = Run {
        cfg,
        providers,
        inputs: BTreeMap::new(),
    };
    let prepared = cfg.validate().and_then(|_| Ok(fs::create_dir_all(&cfg.out_dir)?));
    if let Err(e) = prepared {
        return Err(fail(manifest, "config", e, None));
    }
    for stage in STAGES {
        if !cfg.enabled(stage) {
            continue;
        }
        log::info!("event=stage_start stage={stage}");
        let start = Instant::now();
        let mut rec = StageRecord {
            name: stage.to_string(),
            ..Default::default()
        };
        let result = match stage {
            "sample" => run.sample(&mut rec),
            "synthesize" => run.synthesize(&mut rec),
            "screen" => run.screen(&mut rec),
            "review" => run.review(&mut rec),
            "evaluate" => run.evaluate(&mut rec),
            _ => unreachable!("unknown stage"),
        };
        rec.duration_ms = start.elapsed().as_secs_f64() * 1000.0;
        manifest.inputs = run.inputs.clone();
        if let Err(e) = result {
            return Err(fail(manifest, stage, e, Some(&cfg.out_dir)));
        }
        log::info!(
            "event=stage_done stage={stage} duration_ms={:.1} counts={:?}",
            rec.duration_ms,
            rec.counts
        );
        manifest.stages.push(rec);
    }
    if let Err(e) = write_manifest(&manifest, &cfg.out_dir) {
        return Err(fail(manifest, "manifest", e, None));
    }
    Ok(manifest)
}

fn write_manifest(m: &Manifest, dir: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(m)?;
    text.push('\n');
    fs::write(dir.join(MANIFEST), text)?;
    Ok(())
}

fn fail(mut manifest: Manifest, stage: &str, source: Error, dir: Option<&Path>) -> StageFailure {
    log::error!("event=stage_failed stage={stage} error={source:?}");
    manifest.failed = Some(StageError {
        stage: stage.to_string(),
        error: source.to_string(),
    });
    if let Some(dir) = dir {
        if let Err(e) = write_manifest(&manifest, dir) {
            log::warn!("event=manifest_write_failed error={e}");
        }
    }
    StageFailure {
        stage: stage.to_string(),
        source,
        manifest: Box::new(manifest),
    }
}
