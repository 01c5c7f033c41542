//! Pattern subgraph extraction: multi-hop chains, comparison groups, and
//! set-operation groups, plus overlap filtering and seeded batch sampling.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::OnceLock;

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::KnowledgeGraph;
use crate::model::{PatternKind, Triple};

/// Restart attempts per requested sample before giving up.
pub const RETRY_BUDGET: usize = 32;
/// Cap on DFS node expansions per chain attempt.
const DFS_EXPANSION_BUDGET: usize = 10_000;
/// Cap on constraint combinations tried per set-operation seed entity.
const COMBINATION_BUDGET: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Hops per chain.
    pub k: usize,
    /// Samples requested per non-vanilla pattern.
    pub n: usize,
    pub relation_allowlist: BTreeSet<String>,
    pub numeric_relations: BTreeSet<String>,
    /// Relations whose shared tails are attached to comparison groups.
    pub type_relations: BTreeSet<String>,
    /// Maximum triple-set Jaccard between any two kept samples.
    pub max_overlap: f64,
    pub seed: u64,
    pub comparison_size: usize,
    pub setop_constraints: usize,
    pub setop_min_members: usize,
    pub setop_max_members: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            k: 3,
            n: 10,
            relation_allowlist: BTreeSet::new(),
            numeric_relations: BTreeSet::new(),
            type_relations: ["instance of".to_string()].into(),
            max_overlap: 0.25,
            seed: 0,
            comparison_size: 2,
            setop_constraints: 2,
            setop_min_members: 2,
            setop_max_members: 5,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::contract("k must be >= 1"));
        }
        if self.n == 0 {
            return Err(Error::contract("n must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.max_overlap) {
            return Err(Error::contract(format!(
                "max_overlap must be in [0,1], got {}",
                self.max_overlap
            )));
        }
        if self.comparison_size < 2 {
            return Err(Error::contract("comparison_size must be >= 2"));
        }
        if self.setop_constraints < 2 || self.setop_min_members < 2 {
            return Err(Error::contract("set-operation groups need c >= 2 and m >= 2"));
        }
        if self.setop_max_members < self.setop_min_members {
            return Err(Error::contract("setop_max_members < setop_min_members"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgraphSample {
    pub pattern: PatternKind,
    pub triples: Vec<Triple>,
    pub seed_entity: String,
}

impl SubgraphSample {
    pub fn evidence(&self) -> Vec<String> {
        self.triples.iter().map(Triple::to_string).collect()
    }
}

fn quantity_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*([+-]?\d+(?:\.\d+)?)\s*(.*?)\s*$").expect("valid regex"))
}

/// Leading decimal number of a literal and its unit suffix, e.g. `"183 centimetre"`.
pub fn parse_quantity(tail: &str) -> Option<(f64, String)> {
    let caps = quantity_re().captures(tail)?;
    let value: f64 = caps[1].parse().ok()?;
    Some((value, caps[2].to_string()))
}

pub(crate) fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn ensure_nonempty(kg: &KnowledgeGraph) -> Result<()> {
    if kg.is_empty() {
        Err(Error::EmptyGraph)
    } else {
        Ok(())
    }
}

/// Start candidates in random order, entities from `avoid` pushed to the back.
fn shuffled_heads<'a>(
    kg: &'a KnowledgeGraph,
    rng: &mut ChaCha8Rng,
    avoid: &BTreeSet<String>,
) -> Vec<&'a str> {
    let mut heads: Vec<&str> = kg.heads().collect();
    heads.shuffle(rng);
    heads.sort_by_key(|h| avoid.contains(*h));
    heads
}

pub fn sample_chain(kg: &KnowledgeGraph, cfg: &SamplerConfig) -> Result<Option<SubgraphSample>> {
    sample_chain_with(kg, cfg, &mut rng_for(cfg.seed), &BTreeSet::new())
}

pub fn sample_chain_with(
    kg: &KnowledgeGraph,
    cfg: &SamplerConfig,
    rng: &mut ChaCha8Rng,
    avoid: &BTreeSet<String>,
) -> Result<Option<SubgraphSample>> {
    ensure_nonempty(kg)?;
    if cfg.k == 0 {
        return Err(Error::contract("k must be >= 1"));
    }
    for start in shuffled_heads(kg, rng, avoid).into_iter().take(RETRY_BUDGET) {
        let mut visited = vec![start.to_string()];
        let mut path = Vec::with_capacity(cfg.k);
        let mut budget = DFS_EXPANSION_BUDGET;
        if walk(kg, cfg.k, rng, &mut visited, &mut path, &mut budget) {
            return Ok(Some(SubgraphSample {
                pattern: PatternKind::MultiHops,
                triples: path,
                seed_entity: start.to_string(),
            }));
        }
    }
    Ok(None)
}

/// Randomized DFS for a simple path of `k` forward hops from the last visited entity.
fn walk(
    kg: &KnowledgeGraph,
    k: usize,
    rng: &mut ChaCha8Rng,
    visited: &mut Vec<String>,
    path: &mut Vec<Triple>,
    budget: &mut usize,
) -> bool {
    if path.len() == k {
        return true;
    }
    if *budget == 0 {
        return false;
    }
    *budget -= 1;
    let current = visited.last().expect("start entity").clone();
    let mut edges: Vec<&Triple> = kg
        .out_edges(&current)
        .filter(|t| !visited.iter().any(|v| v == t.tail()))
        .collect();
    edges.shuffle(rng);
    for e in edges {
        visited.push(e.tail().to_string());
        path.push(e.clone());
        if walk(kg, k, rng, visited, path, budget) {
            return true;
        }
        path.pop();
        visited.pop();
    }
    false
}

pub fn sample_comparison(
    kg: &KnowledgeGraph,
    cfg: &SamplerConfig,
) -> Result<Option<SubgraphSample>> {
    sample_comparison_with(kg, cfg, &mut rng_for(cfg.seed), &BTreeSet::new())
}

pub fn sample_comparison_with(
    kg: &KnowledgeGraph,
    cfg: &SamplerConfig,
    rng: &mut ChaCha8Rng,
    avoid: &BTreeSet<String>,
) -> Result<Option<SubgraphSample>> {
    ensure_nonempty(kg)?;
    if cfg.numeric_relations.is_empty() {
        return Err(Error::contract("comparison sampling needs numeric_relations"));
    }
    let mut relations: Vec<&String> = cfg.numeric_relations.iter().collect();
    relations.shuffle(rng);
    for rel in relations {
        // unit -> candidate (triple, quantity)
        let mut by_unit: BTreeMap<String, Vec<(&Triple, f64)>> = BTreeMap::new();
        for t in kg.triples() {
            if t.relation() != rel.as_str() || avoid.contains(t.head()) {
                continue;
            }
            if let Some((q, unit)) = parse_quantity(t.tail()) {
                by_unit.entry(unit).or_default().push((t, q));
            }
        }
        let mut groups: Vec<Vec<(&Triple, f64)>> = by_unit.into_values().collect();
        groups.shuffle(rng);
        for mut cands in groups {
            cands.shuffle(rng);
            let mut chosen = Vec::new();
            if pick_distinct(&cands, 0, cfg.comparison_size, &mut chosen, &mut (RETRY_BUDGET * 64)) {
                let picked: Vec<&Triple> = chosen.iter().map(|&i| cands[i].0).collect();
                return Ok(Some(build_comparison(kg, cfg, &picked)));
            }
        }
    }
    Ok(None)
}

/// Backtracking choice of `size` candidates with pairwise-distinct heads and quantities.
fn pick_distinct(
    cands: &[(&Triple, f64)],
    from: usize,
    size: usize,
    chosen: &mut Vec<usize>,
    budget: &mut usize,
) -> bool {
    if chosen.len() == size {
        return true;
    }
    for i in from..cands.len() {
        if *budget == 0 {
            return false;
        }
        *budget -= 1;
        let (t, q) = cands[i];
        let clash = chosen
            .iter()
            .any(|&j| cands[j].0.head() == t.head() || cands[j].1 == q);
        if clash {
            continue;
        }
        chosen.push(i);
        if pick_distinct(cands, i + 1, size, chosen, budget) {
            return true;
        }
        chosen.pop();
    }
    false
}

fn build_comparison(kg: &KnowledgeGraph, cfg: &SamplerConfig, picked: &[&Triple]) -> SubgraphSample {
    // type tails shared by every compared head
    let type_sets: Vec<BTreeSet<(&str, &str)>> = picked
        .iter()
        .map(|t| {
            kg.out_edges(t.head())
                .filter(|e| cfg.type_relations.contains(e.relation()))
                .map(|e| (e.relation(), e.tail()))
                .collect()
        })
        .collect();
    let shared: BTreeSet<(&str, &str)> = type_sets
        .iter()
        .skip(1)
        .fold(type_sets[0].clone(), |acc, s| acc.intersection(s).copied().collect());

    let mut triples = Vec::new();
    for t in picked {
        for (rel, tail) in &shared {
            triples.push(Triple::new(t.head(), rel, tail).expect("graph triple fields"));
        }
        triples.push((*t).clone());
    }
    SubgraphSample {
        pattern: PatternKind::Comparison,
        triples,
        seed_entity: picked[0].head().to_string(),
    }
}

pub fn sample_setop(kg: &KnowledgeGraph, cfg: &SamplerConfig) -> Result<Option<SubgraphSample>> {
    sample_setop_with(kg, cfg, &mut rng_for(cfg.seed), &BTreeSet::new())
}

pub fn sample_setop_with(
    kg: &KnowledgeGraph,
    cfg: &SamplerConfig,
    rng: &mut ChaCha8Rng,
    avoid: &BTreeSet<String>,
) -> Result<Option<SubgraphSample>> {
    ensure_nonempty(kg)?;
    let c = cfg.setop_constraints.max(2);
    for seed in shuffled_heads(kg, rng, avoid).into_iter().take(RETRY_BUDGET) {
        let mut pairs: Vec<(&str, &str)> = kg
            .out_edges(seed)
            .map(|t| (t.relation(), t.tail()))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if pairs.len() < c {
            continue;
        }
        pairs.shuffle(rng);
        for combo in pairs.iter().combinations(c).take(COMBINATION_BUDGET) {
            let members = combo
                .iter()
                .map(|(r, t)| kg.heads_with(r, t).cloned().unwrap_or_default())
                .reduce(|acc, s| acc.intersection(&s).cloned().collect())
                .unwrap_or_default();
            if members.len() < cfg.setop_min_members.max(2) || members.len() > cfg.setop_max_members {
                continue;
            }
            let triples = members
                .iter()
                .flat_map(|m| {
                    combo
                        .iter()
                        .map(move |(r, t)| Triple::new(m, r, t).expect("graph triple fields"))
                })
                .collect();
            return Ok(Some(SubgraphSample {
                pattern: PatternKind::SetOperation,
                triples,
                seed_entity: seed.to_string(),
            }));
        }
    }
    Ok(None)
}

/// Jaccard similarity of two samples' triple sets.
pub fn triple_jaccard(a: &SubgraphSample, b: &SubgraphSample) -> f64 {
    let sa: HashSet<&Triple> = a.triples.iter().collect();
    let sb: HashSet<&Triple> = b.triples.iter().collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        return 0.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}

/// Greedy order-preserving selection keeping pairwise Jaccard <= `max_overlap`.
pub fn filter_overlap(samples: Vec<SubgraphSample>, max_overlap: f64) -> Vec<SubgraphSample> {
    let mut kept: Vec<SubgraphSample> = Vec::with_capacity(samples.len());
    for s in samples {
        if kept.iter().all(|k| triple_jaccard(k, &s) <= max_overlap) {
            kept.push(s);
        }
    }
    kept
}

/// Up to `n` samples per KG pattern, then overlap filtering. Task `i` of
/// pattern `p` draws from a generator seeded with `seed + p * n + i`.
pub fn batch_sample(kg: &KnowledgeGraph, cfg: &SamplerConfig) -> Result<Vec<SubgraphSample>> {
    cfg.validate()?;
    ensure_nonempty(kg)?;
    let patterns = [
        PatternKind::MultiHops,
        PatternKind::Comparison,
        PatternKind::SetOperation,
    ];
    let per_pattern: Vec<Result<Vec<SubgraphSample>>> = patterns
        .par_iter()
        .enumerate()
        .map(|(p, &pattern)| sample_pattern(kg, cfg, pattern, (p * cfg.n) as u64))
        .collect();
    let mut all = Vec::new();
    for r in per_pattern {
        all.extend(r?);
    }
    Ok(filter_overlap(all, cfg.max_overlap))
}

fn sample_pattern(
    kg: &KnowledgeGraph,
    cfg: &SamplerConfig,
    pattern: PatternKind,
    task_offset: u64,
) -> Result<Vec<SubgraphSample>> {
    if pattern == PatternKind::Comparison && cfg.numeric_relations.is_empty() {
        log::info!("event=comparison_skipped reason=no_numeric_relations");
        return Ok(Vec::new());
    }
    let mut used = BTreeSet::new();
    let mut out = Vec::new();
    for i in 0..cfg.n as u64 {
        let mut rng = rng_for(cfg.seed.wrapping_add(task_offset + i));
        let sample = match pattern {
            PatternKind::MultiHops => sample_chain_with(kg, cfg, &mut rng, &used)?,
            PatternKind::Comparison => {
                match sample_comparison_with(kg, cfg, &mut rng, &used)? {
                    Some(s) => Some(s),
                    None => sample_comparison_with(kg, cfg, &mut rng, &BTreeSet::new())?,
                }
            }
            PatternKind::SetOperation => sample_setop_with(kg, cfg, &mut rng, &used)?,
            PatternKind::Vanilla => unreachable!("vanilla samples come from claims"),
        };
        if let Some(s) = sample {
            match pattern {
                PatternKind::MultiHops => {
                    used.insert(s.seed_entity.clone());
                }
                _ => used.extend(s.triples.iter().map(|t| t.head().to_string())),
            }
            out.push(s);
        }
    }
    Ok(out)
}
