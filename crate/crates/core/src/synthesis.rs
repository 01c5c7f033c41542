//! Prompt assembly, generation parsing, evidence chains, and sample assembly.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markers::{slot, strip_leading, Occurrence};
use crate::metrics::{extract_label, leading_label};
use crate::model::{ClaimRecord, Label, PatternKind, QRSample, Triple};
use crate::providers::{GenerationParams, TextProvider};
use crate::sampler::{rng_for, SubgraphSample};
use crate::templates::{self, Template};

/// Attempts per generation or evidence call before the sample is dropped.
pub const GENERATION_RETRIES: usize = 3;
pub const MIN_PROBE_POOL: usize = 100;
pub const DEFAULT_PROBE_SIZE: usize = 5;

#[derive(Debug, Clone, Copy)]
pub enum Knowledge<'a> {
    Subgraph(&'a SubgraphSample),
    Claim(&'a ClaimRecord),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationOutput {
    pub query: String,
    pub correct_response: String,
    pub incorrect_response: String,
}

fn join_sections(role: &str, demos: &[String], directive: &str, tail: &str) -> String {
    let mut parts: Vec<&str> = vec![role];
    parts.extend(demos.iter().map(String::as_str));
    if !directive.is_empty() {
        parts.push(directive);
    }
    parts.push(tail);
    parts.join("\n\n")
}

pub fn knowledge_slot(triples: &[Triple]) -> String {
    triples
        .iter()
        .map(Triple::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

/// Role, demonstrations, directive, then the knowledge slot.
pub fn build_generation_prompt(
    pattern: PatternKind,
    knowledge: Knowledge<'_>,
    demos: &[String],
) -> Result<String> {
    if demos.is_empty() {
        return Err(Error::contract("generation prompt needs at least one demonstration"));
    }
    let slot = match (pattern, knowledge) {
        (PatternKind::Vanilla, Knowledge::Claim(c)) => format!("#Response#: {}", c.claim.trim()),
        (p, Knowledge::Subgraph(s)) if p.is_kg() && s.pattern == p => {
            format!("#Knowledge#: {}", knowledge_slot(&s.triples))
        }
        (p, Knowledge::Claim(_)) => {
            return Err(Error::contract(format!("claims only feed the vanilla pattern, not {p}")))
        }
        (p, Knowledge::Subgraph(s)) => {
            return Err(Error::contract(format!(
                "{} subgraph cannot feed the {p} prompt",
                s.pattern
            )))
        }
    };
    let t: &Template = templates::generation(pattern);
    Ok(join_sections(&t.role, demos, &t.directive, &slot))
}

/// Prompt with the bundled demonstrations for `pattern`.
pub fn generation_prompt(pattern: PatternKind, knowledge: Knowledge<'_>) -> Result<String> {
    build_generation_prompt(pattern, knowledge, &templates::generation(pattern).demos)
}

pub fn parse_generation(text: &str) -> std::result::Result<GenerationOutput, Vec<&'static str>> {
    let get = |name| slot(text, name, Occurrence::First).filter(|s| !s.is_empty());
    let fields = [
        ("#Query#", get("Query")),
        ("#Correct response#", get("Correct response")),
        ("#Incorrect response#", get("Incorrect response")),
    ];
    let missing: Vec<&'static str> = fields
        .iter()
        .filter(|(_, v)| v.is_none())
        .map(|(n, _)| *n)
        .collect();
    match fields {
        [(_, Some(q)), (_, Some(c)), (_, Some(i))] => Ok(GenerationOutput {
            query: q.to_string(),
            correct_response: c.to_string(),
            incorrect_response: i.to_string(),
        }),
        _ => Err(missing),
    }
}

pub fn generate_qr(
    provider: &dyn TextProvider,
    prompt: &str,
    params: &GenerationParams,
) -> Result<GenerationOutput> {
    let mut last = (Vec::new(), String::new());
    for attempt in 1..=GENERATION_RETRIES {
        let raw = provider.complete(prompt, params)?;
        match parse_generation(&raw) {
            Ok(out) => return Ok(out),
            Err(missing) => {
                log::warn!(
                    "event=generation_parse_failed attempt={attempt} missing={}",
                    missing.join(",")
                );
                last = (missing, raw);
            }
        }
    }
    Err(Error::GenerationParse {
        attempts: GENERATION_RETRIES,
        missing: last.0.join(", "),
        raw: last.1,
    })
}

pub fn generate_query_for_claim(
    provider: &dyn TextProvider,
    claim: &ClaimRecord,
    params: &GenerationParams,
) -> Result<String> {
    let prompt = generation_prompt(PatternKind::Vanilla, Knowledge::Claim(claim))?;
    let mut raw = String::new();
    for attempt in 1..=GENERATION_RETRIES {
        raw = provider.complete(&prompt, params)?;
        if let Some(q) = slot(&raw, "Query", Occurrence::First).filter(|q| !q.is_empty()) {
            return Ok(q.to_string());
        }
        log::warn!("event=generation_parse_failed attempt={attempt} missing=#Query#");
    }
    Err(Error::GenerationParse {
        attempts: GENERATION_RETRIES,
        missing: "#Query#".into(),
        raw,
    })
}

pub fn claim_check_prompt(claim: &ClaimRecord) -> String {
    format!(
        "{}\n\n#Claim#: {}\n#Output#:",
        templates::claim_check().role,
        claim.claim.trim()
    )
}

/// True when the judge's zero-shot verdict disagrees with gold, i.e. the claim is a hard case.
pub fn prescreen_claim(judge: &dyn TextProvider, claim: &ClaimRecord) -> Result<bool> {
    let out = judge.complete(&claim_check_prompt(claim), &GenerationParams::EVALUATION)?;
    match extract_label(&out).label() {
        Some(l) => Ok(l != claim.verdict.label()),
        None => {
            log::warn!(
                "event=prescreen_unparseable claim={:?} action=keep",
                claim.claim
            );
            Ok(true)
        }
    }
}

/// Evidence as it appears in prompts: triples verbatim, text snippets in brackets.
pub fn evidence_slot(evidence: &[String]) -> String {
    evidence
        .iter()
        .map(|e| {
            let e = e.trim();
            if Triple::parse_serialized(e).is_ok() || (e.starts_with('[') && e.ends_with(']')) {
                e.to_string()
            } else {
                format!("[{e}]")
            }
        })
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn build_evidence_prompt(
    golden_label: Label,
    query: &str,
    response: &str,
    evidence: &[String],
    demos: &[String],
) -> Result<String> {
    if evidence.iter().all(|e| e.trim().is_empty()) {
        return Err(Error::contract("evidence prompt needs at least one fact"));
    }
    let t = templates::evidence_chain();
    let tail = format!(
        "#Golden Label#: {golden_label}\n#Query#: {}\n#Response#: {}\n#Evidence#: {}\n#Output#:",
        query.trim(),
        response.trim(),
        evidence_slot(evidence)
    );
    Ok(join_sections(&t.role, demos, &t.directive, &tail))
}

/// Completion whose leading label equals `golden`, after up to three attempts.
pub fn generate_evidence_chain(
    provider: &dyn TextProvider,
    prompt: &str,
    params: &GenerationParams,
    golden: Label,
) -> Result<String> {
    let mut got = String::from("none");
    for attempt in 1..=GENERATION_RETRIES {
        let raw = provider.complete(prompt, params)?;
        let text = strip_leading(&raw, "Output");
        match leading_label(text) {
            Some(l) if l == golden => return Ok(text.to_string()),
            other => {
                got = other.map_or("none".to_string(), |l| l.to_string());
                log::warn!("event=evidence_label_mismatch attempt={attempt} expected={golden} got={got}");
            }
        }
    }
    Err(Error::EvidenceMismatch {
        attempts: GENERATION_RETRIES,
        expected: golden.to_string(),
        got,
    })
}

/// Sequential id source; ids are assigned after parallel work so output is order-stable.
#[derive(Debug, Clone)]
pub struct IdGen {
    prefix: String,
    next: u64,
}

impl IdGen {
    pub fn new(prefix: &str) -> Self {
        Self {
            prefix: prefix.to_string(),
            next: 0,
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn next(&mut self) -> String {
        self.next += 1;
        format!("{}-{:06}", self.prefix, self.next)
    }
}

pub struct Explanations {
    pub factual: String,
    pub non_factual: String,
}

/// FACTUAL (query + correct) and NON-FACTUAL (query + incorrect) records sharing evidence.
pub fn assemble_samples(
    gen: &GenerationOutput,
    evidence: &[String],
    pattern: PatternKind,
    domain: &str,
    explanations: Explanations,
    ids: &mut IdGen,
) -> [QRSample; 2] {
    let make = |id: String, response: &str, label: Label, explanation: String| QRSample {
        id,
        pattern,
        domain: domain.to_string(),
        query: gen.query.clone(),
        response: response.to_string(),
        label,
        evidence: evidence.to_vec(),
        explanation,
    };
    [
        make(ids.next(), &gen.correct_response, Label::Factual, explanations.factual),
        make(
            ids.next(),
            &gen.incorrect_response,
            Label::NonFactual,
            explanations.non_factual,
        ),
    ]
}

/// Uniform draw without replacement from a pool of at least 100 samples.
pub fn refinement_probe(pool: &[QRSample], probe_size: usize, seed: u64) -> Result<Vec<QRSample>> {
    if pool.len() < MIN_PROBE_POOL {
        return Err(Error::contract(format!(
            "refinement probe needs a pool of at least {MIN_PROBE_POOL}, got {}",
            pool.len()
        )));
    }
    if probe_size == 0 || probe_size > pool.len() {
        return Err(Error::contract(format!("invalid probe size {probe_size}")));
    }
    let mut rng = rng_for(seed);
    Ok(index::sample(&mut rng, pool.len(), probe_size)
        .into_iter()
        .map(|i| pool[i].clone())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisConfig {
    pub params: GenerationParams,
    pub kg_domain: String,
    pub claim_domain: String,
    pub prescreen: bool,
    pub max_in_flight: usize,
    pub id_prefix: String,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            params: GenerationParams::SYNTHESIS,
            kg_domain: "wikidata".into(),
            claim_domain: "fever".into(),
            prescreen: true,
            max_in_flight: 4,
            id_prefix: "s".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SynthesisReport {
    pub subgraphs_in: usize,
    pub claims_in: usize,
    pub claims_prescreened_out: usize,
    pub dropped: Vec<String>,
    pub samples_out: usize,
}

enum Draft {
    Pair(GenerationOutput, Explanations, Vec<String>, PatternKind),
    Single(String, ClaimRecord, String),
}

fn draft_subgraph(provider: &dyn TextProvider, s: &SubgraphSample, params: &GenerationParams) -> Result<Draft> {
    let prompt = generation_prompt(s.pattern, Knowledge::Subgraph(s))?;
    let gen = generate_qr(provider, &prompt, params)?;
    let evidence = s.evidence();
    let demos = &templates::evidence_chain().demos;
    let explain = |label: Label, response: &str| -> Result<String> {
        let p = build_evidence_prompt(label, &gen.query, response, &evidence, demos)?;
        generate_evidence_chain(provider, &p, params, label)
    };
    let explanations = Explanations {
        factual: explain(Label::Factual, &gen.correct_response)?,
        non_factual: explain(Label::NonFactual, &gen.incorrect_response)?,
    };
    Ok(Draft::Pair(gen, explanations, evidence, s.pattern))
}

fn draft_claim(provider: &dyn TextProvider, c: &ClaimRecord, params: &GenerationParams) -> Result<Draft> {
    let query = generate_query_for_claim(provider, c, params)?;
    let label = c.verdict.label();
    let p = build_evidence_prompt(label, &query, &c.claim, &c.evidence, &templates::evidence_chain().demos)?;
    let explanation = generate_evidence_chain(provider, &p, params, label)?;
    Ok(Draft::Single(query, c.clone(), explanation))
}

/// Content failures drop the item with a logged reason; transport failures abort.
fn droppable(e: &Error) -> bool {
    matches!(e, Error::GenerationParse { .. } | Error::EvidenceMismatch { .. })
}

/// Synthesizes KG pairs and vanilla claim samples. Provider calls run on a
/// pool of `max_in_flight` threads; ids follow input order.
pub fn synthesize(
    provider: &dyn TextProvider,
    judge: Option<&dyn TextProvider>,
    subgraphs: &[SubgraphSample],
    claims: &[ClaimRecord],
    cfg: &SynthesisConfig,
) -> Result<(Vec<QRSample>, SynthesisReport)> {
    cfg.params.validate()?;
    let mut report = SynthesisReport {
        subgraphs_in: subgraphs.len(),
        claims_in: claims.len(),
        ..Default::default()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.max_in_flight.max(1))
        .build()
        .map_err(|e| Error::contract(format!("thread pool: {e}")))?;

    let hard_claims: Vec<&ClaimRecord> = match (cfg.prescreen, judge) {
        (true, Some(judge)) => {
            let keep: Vec<Result<bool>> =
                pool.install(|| claims.par_iter().map(|c| prescreen_claim(judge, c)).collect());
            let mut out = Vec::new();
            for (c, k) in claims.iter().zip(keep) {
                if k? {
                    out.push(c);
                } else {
                    report.claims_prescreened_out += 1;
                }
            }
            out
        }
        _ => claims.iter().collect(),
    };

    let drafts: Vec<(String, Result<Draft>)> = pool.install(|| {
        let kg = subgraphs
            .par_iter()
            .map(|s| (format!("subgraph:{}", s.seed_entity), draft_subgraph(provider, s, &cfg.params)));
        let cl = hard_claims
            .par_iter()
            .map(|c| (format!("claim:{}", c.claim), draft_claim(provider, c, &cfg.params)));
        kg.chain(cl).collect()
    });

    let mut ids = IdGen::new(&cfg.id_prefix);
    let mut samples = Vec::new();
    for (what, draft) in drafts {
        match draft {
            Ok(Draft::Pair(gen, ex, evidence, pattern)) => {
                samples.extend(assemble_samples(&gen, &evidence, pattern, &cfg.kg_domain, ex, &mut ids));
            }
            Ok(Draft::Single(query, claim, explanation)) => samples.push(QRSample {
                id: ids.next(),
                pattern: PatternKind::Vanilla,
                domain: claim.domain.clone().unwrap_or_else(|| cfg.claim_domain.clone()),
                query,
                response: claim.claim.trim().to_string(),
                label: claim.verdict.label(),
                evidence: claim.evidence.clone(),
                explanation,
            }),
            Err(e) if droppable(&e) => {
                log::warn!("event=sample_dropped item={what:?} reason={e}");
                report.dropped.push(format!("{what}: {e}"));
            }
            Err(e) => return Err(e),
        }
    }
    report.samples_out = samples.len();
    Ok((samples, report))
}
