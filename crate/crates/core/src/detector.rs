//! Hallucination judges, verdict triangulation, and dataset evaluation.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::check_record;
use crate::error::{Error, Result};
use crate::metrics::{exp_match, extract_label, fact_cls, ExpMatchConfig, LabelOutcome};
use crate::model::{PatternKind, PredictedLabel, QRSample};
use crate::providers::{GenerationParams, TextProvider};
use crate::retrieval::{Searcher, TOOL_HEADER};
use crate::scalar::Scalar;
use crate::synthesis::evidence_slot;
use crate::templates;

pub const ICL_SHOTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeMode {
    ZeroShot,
    Icl,
    Tool,
    Guardian,
    Triangulate,
}

impl FromStr for JudgeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" | "zero_shot" | "zero-shot" => Ok(JudgeMode::ZeroShot),
            "icl" => Ok(JudgeMode::Icl),
            "tool" => Ok(JudgeMode::Tool),
            "guardian" => Ok(JudgeMode::Guardian),
            "triangulate" => Ok(JudgeMode::Triangulate),
            other => Err(Error::contract(format!("unknown judge mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeConfig {
    pub mode: JudgeMode,
    pub demos: Vec<String>,
    /// Append the gold evidence to the prompt.
    pub inject_facts: bool,
    /// Drop the query slot from the prompt.
    pub omit_query: bool,
    pub params: GenerationParams,
}

impl JudgeConfig {
    /// Mode defaults: the bundled four demonstrations for ICL, none otherwise.
    pub fn new(mode: JudgeMode) -> Self {
        let demos = if mode == JudgeMode::Icl {
            templates::fallacy_finder().demos.clone()
        } else {
            Vec::new()
        };
        Self {
            mode,
            demos,
            inject_facts: false,
            omit_query: false,
            params: GenerationParams::EVALUATION,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if (self.mode == JudgeMode::Icl) != !self.demos.is_empty() {
            return Err(Error::contract("demonstrations are required for ICL and only for ICL"));
        }
        if self.inject_facts && self.omit_query {
            return Err(Error::contract("inject_facts and omit_query are mutually exclusive"));
        }
        if self.mode == JudgeMode::Triangulate && (self.inject_facts || self.omit_query) {
            return Err(Error::contract("ablation flags are not supported with triangulation"));
        }
        self.params.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub label: PredictedLabel,
    pub justification: String,
    pub judge: String,
    /// Set when triangulation fell back to the seeker's verdict.
    #[serde(default)]
    pub fallback: bool,
}

impl Verdict {
    pub fn from_text(text: &str, judge: &str) -> Self {
        Self {
            label: extract_label(text),
            justification: text.to_string(),
            judge: judge.to_string(),
            fallback: false,
        }
    }
}

fn tool_slot(block: &str) -> &str {
    block.trim().strip_prefix(TOOL_HEADER).unwrap_or(block).trim()
}

pub fn build_judge_prompt(sample: &QRSample, cfg: &JudgeConfig, tool_block: Option<&str>) -> String {
    let t = templates::fallacy_finder();
    let mut parts: Vec<String> = vec![t.role.clone()];
    if cfg.mode == JudgeMode::Icl {
        parts.extend(cfg.demos.iter().cloned());
    }
    let mut case = String::new();
    if !cfg.omit_query {
        let _ = writeln!(case, "#Query#: {}", sample.query.trim());
    }
    let _ = writeln!(case, "#Response#: {}", sample.response.trim());
    if cfg.inject_facts && !sample.evidence.is_empty() {
        let _ = writeln!(case, "#Evidence#: {}", evidence_slot(&sample.evidence));
    }
    if let Some(block) = tool_block {
        let _ = writeln!(case, "#Returned by the tool#: {}", tool_slot(block));
    }
    case.push_str("#Output#:");
    parts.push(case);
    parts.join("\n\n")
}

/// One completion at evaluation parameters, parsed into a verdict.
pub fn judge(
    provider: &dyn TextProvider,
    sample: &QRSample,
    cfg: &JudgeConfig,
    searcher: Option<&dyn Searcher>,
) -> Result<Verdict> {
    cfg.validate()?;
    let block = match cfg.mode {
        JudgeMode::Tool => {
            let s = searcher.ok_or_else(|| Error::contract("tool mode needs a searcher"))?;
            Some(s.search(&sample.query)?)
        }
        JudgeMode::Triangulate => {
            return Err(Error::contract("use a Triangulator for triangulate mode"));
        }
        _ => None,
    };
    let prompt = build_judge_prompt(sample, cfg, block.as_deref());
    let out = provider.complete(&prompt, &cfg.params)?;
    Ok(Verdict::from_text(&out, provider.identity()))
}

pub fn build_manager_prompt(
    sample: &QRSample,
    seeker: &Verdict,
    guardian: &Verdict,
    evidence_block: &str,
) -> String {
    let t = templates::verdict_manager();
    let mut parts: Vec<String> = vec![t.role.clone()];
    parts.extend(t.demos.iter().cloned());
    if seeker.label.is_parsed() && seeker.label == guardian.label {
        parts.push(format!(
            "Both judges labeled this case {}. Confirm that label unless the returned evidence contradicts both opinions.",
            seeker.label
        ));
    }
    parts.push(format!(
        "#Query#: {}\n#Response#: {}\n#Returned by the tool#: {}\n#Truth Guardian#: {}\n#Truth Seeker#: {}\n#Verdict#:",
        sample.query.trim(),
        sample.response.trim(),
        tool_slot(evidence_block),
        guardian.justification.trim(),
        seeker.justification.trim()
    ));
    parts.join("\n\n")
}

/// Manager arbitration; an unlabeled manager answer falls back to the seeker.
pub fn triangulate(
    manager: &dyn TextProvider,
    sample: &QRSample,
    seeker: &Verdict,
    guardian: &Verdict,
    evidence_block: &str,
    params: &GenerationParams,
) -> Result<Verdict> {
    let prompt = build_manager_prompt(sample, seeker, guardian, evidence_block);
    let out = manager.complete(&prompt, params)?;
    let v = Verdict::from_text(&out, manager.identity());
    if v.label.is_parsed() {
        return Ok(v);
    }
    log::warn!(
        "event=triangulation_fallback sample={} seeker_label={}",
        sample.id,
        seeker.label.as_str()
    );
    Ok(Verdict {
        label: seeker.label,
        justification: seeker.justification.clone(),
        judge: manager.identity().to_string(),
        fallback: true,
    })
}

/// Anything that maps a sample to a verdict.
pub trait Judge: Send + Sync {
    fn name(&self) -> &str;

    fn judge(&self, sample: &QRSample) -> Result<Verdict>;
}

pub struct PromptJudge {
    pub provider: Arc<dyn TextProvider>,
    pub cfg: JudgeConfig,
    pub searcher: Option<Arc<dyn Searcher>>,
    name: String,
}

impl PromptJudge {
    pub fn new(
        provider: Arc<dyn TextProvider>,
        cfg: JudgeConfig,
        searcher: Option<Arc<dyn Searcher>>,
    ) -> Result<Self> {
        cfg.validate()?;
        if cfg.mode == JudgeMode::Tool && searcher.is_none() {
            return Err(Error::contract("tool mode needs a searcher"));
        }
        let mut name = format!("{}/{}", provider.identity(), mode_name(cfg.mode));
        if cfg.inject_facts {
            name.push_str("+facts");
        }
        if cfg.omit_query {
            name.push_str("-query");
        }
        Ok(Self {
            provider,
            cfg,
            searcher,
            name,
        })
    }
}

fn mode_name(mode: JudgeMode) -> &'static str {
    match mode {
        JudgeMode::ZeroShot => "zero",
        JudgeMode::Icl => "icl",
        JudgeMode::Tool => "tool",
        JudgeMode::Guardian => "guardian",
        JudgeMode::Triangulate => "triangulate",
    }
}

impl Judge for PromptJudge {
    fn name(&self) -> &str {
        &self.name
    }

    fn judge(&self, sample: &QRSample) -> Result<Verdict> {
        judge(self.provider.as_ref(), sample, &self.cfg, self.searcher.as_deref())
    }
}

/// Seeker (tool-enhanced), guardian, and manager wired together.
pub struct Triangulator {
    pub seeker: Arc<dyn TextProvider>,
    pub guardian: Arc<dyn TextProvider>,
    pub manager: Arc<dyn TextProvider>,
    pub searcher: Arc<dyn Searcher>,
    pub params: GenerationParams,
}

impl Judge for Triangulator {
    fn name(&self) -> &str {
        "triangulate"
    }

    fn judge(&self, sample: &QRSample) -> Result<Verdict> {
        let block = self.searcher.search(&sample.query)?;
        let seeker_cfg = JudgeConfig {
            params: self.params,
            ..JudgeConfig::new(JudgeMode::Tool)
        };
        let seeker_prompt = build_judge_prompt(sample, &seeker_cfg, Some(&block));
        let seeker = Verdict::from_text(
            &self.seeker.complete(&seeker_prompt, &self.params)?,
            self.seeker.identity(),
        );
        let guardian_cfg = JudgeConfig {
            params: self.params,
            ..JudgeConfig::new(JudgeMode::Guardian)
        };
        let guardian = judge(self.guardian.as_ref(), sample, &guardian_cfg, None)?;
        triangulate(self.manager.as_ref(), sample, &seeker, &guardian, &block, &self.params)
    }
}

/// Closure-backed judge.
pub struct FnJudge<F> {
    name: String,
    f: F,
}

impl<F> FnJudge<F>
where
    F: Fn(&QRSample) -> Result<String> + Send + Sync,
{
    pub fn new(name: &str, f: F) -> Self {
        Self {
            name: name.to_string(),
            f,
        }
    }
}

impl<F> Judge for FnJudge<F>
where
    F: Fn(&QRSample) -> Result<String> + Send + Sync,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn judge(&self, sample: &QRSample) -> Result<Verdict> {
        Ok(Verdict::from_text(&(self.f)(sample)?, &self.name))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub output: String,
    pub label: PredictedLabel,
    pub judge: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PatternScore<S: Scalar = f64> {
    pub count: usize,
    /// FactCls x 100.
    pub cls: S,
    /// Mean ExpMatch x 100.
    pub exp: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EvalReport<S: Scalar = f64> {
    pub judge: String,
    pub patterns: BTreeMap<PatternKind, PatternScore<S>>,
    pub average: PatternScore<S>,
    pub samples: usize,
    pub parse_failures: usize,
    pub parse_failure_rate: S,
}

/// Scores verdicts against gold records; both slices are matched by id.
pub fn score_verdicts<S: Scalar>(
    judge: &str,
    dataset: &[QRSample],
    verdicts: &BTreeMap<String, Verdict>,
    exp_cfg: &ExpMatchConfig<S>,
) -> Result<EvalReport<S>> {
    if dataset.is_empty() {
        return Err(Error::contract("evaluation dataset is empty"));
    }
    let mut groups: BTreeMap<PatternKind, (Vec<LabelOutcome>, S)> = BTreeMap::new();
    let mut parse_failures = 0;
    let mut ordered: Vec<&QRSample> = dataset.iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));
    for s in ordered {
        let v = verdicts
            .get(&s.id)
            .ok_or_else(|| Error::NotFound(format!("verdict for {}", s.id)))?;
        if !v.label.is_parsed() {
            parse_failures += 1;
        }
        let e = exp_match(&v.justification, &s.explanation, exp_cfg, v.label.is_parsed());
        let g = groups.entry(s.pattern).or_insert((Vec::new(), S::zero()));
        g.0.push(LabelOutcome::new(s.label, v.label));
        g.1 = g.1 + e.combined;
    }
    let mut patterns = BTreeMap::new();
    for (p, (outcomes, exp_sum)) in groups {
        let n = S::from_count(outcomes.len());
        patterns.insert(
            p,
            PatternScore {
                count: outcomes.len(),
                cls: fact_cls::<S>(&outcomes)? * S::hundred(),
                exp: exp_sum / n * S::hundred(),
            },
        );
    }
    let total = S::from_count(dataset.len());
    let weighted = |f: fn(&PatternScore<S>) -> S| -> S {
        patterns
            .values()
            .map(|ps| f(ps) * S::from_count(ps.count))
            .sum::<S>()
            / total
    };
    let average = PatternScore {
        count: dataset.len(),
        cls: weighted(|p| p.cls),
        exp: weighted(|p| p.exp),
    };
    Ok(EvalReport {
        judge: judge.to_string(),
        patterns,
        average,
        samples: dataset.len(),
        parse_failures,
        parse_failure_rate: S::from_count(parse_failures) / total,
    })
}

/// Judges every sample on a pool of `max_in_flight` threads and scores the verdicts.
pub fn evaluate<S: Scalar>(
    dataset: &[QRSample],
    judge: &dyn Judge,
    exp_cfg: &ExpMatchConfig<S>,
    max_in_flight: usize,
) -> Result<(EvalReport<S>, Vec<Prediction>)> {
    if dataset.is_empty() {
        return Err(Error::contract("evaluation dataset is empty"));
    }
    let mut seen = HashSet::new();
    for s in dataset {
        check_record(s)?;
        if !seen.insert(s.id.as_str()) {
            return Err(Error::Schema {
                id: s.id.clone(),
                message: "duplicate id".into(),
            });
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(max_in_flight.max(1))
        .build()
        .map_err(|e| Error::contract(format!("thread pool: {e}")))?;
    let results: Vec<Result<(String, Verdict)>> = pool.install(|| {
        dataset
            .par_iter()
            .map(|s| judge.judge(s).map(|v| (s.id.clone(), v)))
            .collect()
    });
    let mut verdicts = BTreeMap::new();
    for r in results {
        let (id, v) = r?;
        verdicts.insert(id, v);
    }
    let report = score_verdicts(judge.name(), dataset, &verdicts, exp_cfg)?;
    let predictions = verdicts
        .into_iter()
        .map(|(id, v)| Prediction {
            id,
            output: v.justification,
            label: v.label,
            judge: judge.name().to_string(),
        })
        .collect();
    Ok((report, predictions))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(ReportFormat::Table),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::contract(format!("unknown report format {other:?}"))),
        }
    }
}

/// Column groups in rendered reports: the four patterns then the average.
pub fn column_titles() -> Vec<&'static str> {
    let mut t: Vec<&str> = PatternKind::ALL.iter().map(|p| p.title()).collect();
    t.push("Average");
    t
}

fn row_cells<S: Scalar>(r: &EvalReport<S>) -> Vec<Option<(S, S)>> {
    let mut cells: Vec<Option<(S, S)>> = PatternKind::ALL
        .iter()
        .map(|p| r.patterns.get(p).map(|s| (s.cls, s.exp)))
        .collect();
    cells.push(Some((r.average.cls, r.average.exp)));
    cells
}

/// One row per judge, sorted by judge name.
pub fn render_report<S: Scalar>(reports: &[EvalReport<S>], format: ReportFormat) -> Result<String> {
    let mut rows: Vec<&EvalReport<S>> = reports.iter().collect();
    rows.sort_by(|a, b| a.judge.cmp(&b.judge));
    match format {
        ReportFormat::Json => Ok(serde_json::to_string_pretty(&rows)?),
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["judge".to_string()];
            for t in column_titles() {
                header.push(format!("{t} cls"));
                header.push(format!("{t} exp"));
            }
            w.write_record(&header).map_err(csv_err)?;
            for r in rows {
                let mut rec = vec![r.judge.clone()];
                for c in row_cells(r) {
                    match c {
                        Some((cls, exp)) => {
                            rec.push(format!("{:.2}", cls.to_f64_lossy()));
                            rec.push(format!("{:.2}", exp.to_f64_lossy()));
                        }
                        None => {
                            rec.push(String::new());
                            rec.push(String::new());
                        }
                    }
                }
                w.write_record(&rec).map_err(csv_err)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::contract(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| Error::contract(e.to_string()))
        }
        ReportFormat::Table => {
            let name_w = rows
                .iter()
                .map(|r| r.judge.len())
                .chain(["Judge".len()])
                .max()
                .unwrap_or(5);
            let mut out = String::new();
            let _ = write!(out, "{:<name_w$}", "");
            for t in column_titles() {
                let _ = write!(out, " | {t:^15}");
            }
            out.push('\n');
            let _ = write!(out, "{:<name_w$}", "Judge");
            for _ in column_titles() {
                let _ = write!(out, " | {:>7} {:>7}", "cls", "exp");
            }
            out.push('\n');
            for r in rows {
                let _ = write!(out, "{:<name_w$}", r.judge);
                for c in row_cells(r) {
                    match c {
                        Some((cls, exp)) => {
                            let _ = write!(
                                out,
                                " | {:>7.2} {:>7.2}",
                                cls.to_f64_lossy(),
                                exp.to_f64_lossy()
                            );
                        }
                        None => {
                            let _ = write!(out, " | {:>7} {:>7}", "-", "-");
                        }
                    }
                }
                out.push('\n');
            }
            Ok(out)
        }
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::contract(format!("csv: {e}"))
}
