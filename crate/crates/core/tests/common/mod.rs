//! Independent oracles and fixture builders shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use hallubench_core::graph::KnowledgeGraph;
use hallubench_core::model::{Label, PatternKind, PredictedLabel, QRSample, Triple};
use hallubench_core::retrieval::Document;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

// ---- metrics ----

/// Plain recursive LCS with memoization.
pub fn lcs_oracle(a: &[String], b: &[String]) -> usize {
    fn go(a: &[String], b: &[String], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if i == a.len() || j == b.len() {
            return 0;
        }
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let v = if a[i] == b[j] {
            1 + go(a, b, i + 1, j + 1, memo)
        } else {
            go(a, b, i + 1, j, memo).max(go(a, b, i, j + 1, memo))
        };
        memo.insert((i, j), v);
        v
    }
    go(a, b, 0, 0, &mut HashMap::new())
}

fn f_measure(hit: usize, n_cand: usize, n_ref: usize) -> f64 {
    if hit == 0 || n_cand == 0 || n_ref == 0 {
        return 0.0;
    }
    2.0 * hit as f64 / (n_cand + n_ref) as f64
}

pub fn rouge_l_oracle(c: &[String], r: &[String]) -> f64 {
    f_measure(lcs_oracle(c, r), c.len(), r.len())
}

/// Multiset overlap by sorted merge.
pub fn unigram_f1_oracle(c: &[String], r: &[String]) -> f64 {
    let mut a = c.to_vec();
    let mut b = r.to_vec();
    a.sort();
    b.sort();
    let (mut i, mut j, mut hit) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Equal => {
                hit += 1;
                i += 1;
                j += 1;
            }
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
        }
    }
    f_measure(hit, a.len(), b.len())
}

/// Micro F1 with NON-FACTUAL as the positive class, counted cell by cell.
pub fn fact_cls_oracle(outcomes: &[(Label, PredictedLabel)]) -> f64 {
    let count = |g: Label, pos: bool| {
        outcomes
            .iter()
            .filter(|(gold, p)| *gold == g && (*p == PredictedLabel::NonFactual) == pos)
            .count()
    };
    let tp = count(Label::NonFactual, true);
    let fp = count(Label::Factual, true);
    let fn_ = count(Label::NonFactual, false);
    if tp == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}

pub struct ExpCase {
    pub name: &'static str,
    pub candidate: &'static str,
    pub reference: &'static str,
    pub alpha: f64,
    pub parsed: bool,
    pub score_bd: f64,
    pub score_ht: f64,
    pub combined: f64,
}

/// Hand-computed ExpMatch cases. Sentences are split on terminal punctuation;
/// the first sentence and a closing "Therefore" sentence form the head/tail.
pub fn exp_cases() -> Vec<ExpCase> {
    let c = |name, candidate, reference, alpha, parsed, score_bd, score_ht, combined| ExpCase {
        name,
        candidate,
        reference,
        alpha,
        parsed,
        score_bd,
        score_ht,
        combined,
    };
    const BODY_A: &str = "FACTUAL. A is B. The sky is blue. Therefore, fine.";
    const BODY_B: &str = "FACTUAL. A is B. The sky is green. Therefore, fine.";
    vec![
        c("identical", BODY_A, BODY_A, 0.7, true, 1.0, 1.0, 1.0),
        c("unparseable label scores zero", BODY_A, BODY_A, 0.7, false, 0.0, 0.0, 0.0),
        // body 3/4 overlap both ways; framing identical
        c("one body word differs", BODY_A, BODY_B, 0.7, true, 0.75, 1.0, 0.7 * 0.75 + 0.3),
        c("alpha one ignores framing", BODY_A, BODY_B, 1.0, true, 0.75, 1.0, 0.75),
        c("alpha zero ignores body", BODY_A, BODY_B, 0.0, true, 0.75, 1.0, 1.0),
        // head/tail [x y z therefore ok] vs [x z y therefore ok]: LCS 4 of 5
        c(
            "reordered head",
            "FACTUAL. X Y Z. Body one. Therefore, ok.",
            "FACTUAL. X Z Y. Body one. Therefore, ok.",
            0.7,
            true,
            1.0,
            0.8,
            0.7 + 0.3 * 0.8,
        ),
        // no tail sentence: body [b1 b2] vs [b1 b3 b4] -> 2*1/5; head LCS 1 of 2
        c(
            "no closing sentence",
            "NON-FACTUAL. Head here. b1 b2.",
            "NON-FACTUAL. Head there. b1 b3 b4.",
            0.7,
            true,
            0.4,
            0.5,
            0.7 * 0.4 + 0.3 * 0.5,
        ),
        // a single sentence doubles as body
        c("single sentence", "FACTUAL. a b c d.", "FACTUAL. a b x y.", 0.7, true, 0.5, 0.5, 0.5),
        // multiset overlap 2, lengths 4 and 3 -> 4/7
        c(
            "repeated tokens clip",
            "FACTUAL. H. the the the cat. Therefore, t.",
            "FACTUAL. H. the cat cat. Therefore, t.",
            0.7,
            true,
            4.0 / 7.0,
            1.0,
            0.7 * 4.0 / 7.0 + 0.3,
        ),
        c("disjoint", "FACTUAL. p q. r s. Therefore, u.", "FACTUAL. v w. x y. So z.", 0.7, true, 0.0, 0.0, 0.0),
        c("empty candidate", "", BODY_A, 0.7, true, 0.0, 0.0, 0.0),
        c(
            "label prefix and case ignored",
            "Non-factual: A is B. The sky is blue. Therefore, fine.",
            "NON-FACTUAL. a is b. the SKY is blue! therefore fine.",
            0.7,
            true,
            1.0,
            1.0,
            1.0,
        ),
    ]
}

// ---- sampler ----

pub const NUMERIC: &str = "height";
pub const TYPE_REL: &str = "instance of";

/// Random graph of at most `max_triples` distinct triples with plain, numeric,
/// and type relations.
pub fn random_graph(seed: u64, max_triples: usize) -> KnowledgeGraph {
    let mut r = rng(seed);
    let n_entities = r.gen_range(8..25);
    let ent = |i: usize| format!("e{i}");
    let mut set = BTreeSet::new();
    let target = r.gen_range(max_triples / 2..=max_triples);
    let mut guard = 0;
    while set.len() < target && guard < target * 20 {
        guard += 1;
        let h = ent(r.gen_range(0..n_entities));
        let t = match r.gen_range(0..10) {
            0..=5 => (format!("r{}", r.gen_range(0..4)), ent(r.gen_range(0..n_entities))),
            6..=7 => {
                let unit = if r.gen_bool(0.8) { "cm" } else { "kg" };
                (NUMERIC.to_string(), format!("{} {unit}", r.gen_range(150..160)))
            }
            _ => (TYPE_REL.to_string(), ["human", "robot"][r.gen_range(0..2)].to_string()),
        };
        if t.1 != h {
            set.insert((h, t.0, t.1));
        }
    }
    let mut triples: Vec<Triple> = set
        .into_iter()
        .map(|(h, rel, t)| Triple::new(&h, &rel, &t).unwrap())
        .collect();
    triples.shuffle(&mut r);
    KnowledgeGraph::from_triples(triples)
}

pub type TripleSet = BTreeSet<Triple>;

/// Every simple forward path of exactly `k` hops.
pub fn all_chains(kg: &KnowledgeGraph, k: usize) -> BTreeSet<Vec<Triple>> {
    fn extend(
        kg: &KnowledgeGraph,
        k: usize,
        nodes: &mut Vec<String>,
        path: &mut Vec<Triple>,
        out: &mut BTreeSet<Vec<Triple>>,
    ) {
        if path.len() == k {
            out.insert(path.clone());
            return;
        }
        let last = nodes.last().unwrap().clone();
        for t in kg.triples().iter().filter(|t| t.head() == last) {
            if nodes.iter().any(|n| n == t.tail()) {
                continue;
            }
            nodes.push(t.tail().to_string());
            path.push(t.clone());
            extend(kg, k, nodes, path, out);
            path.pop();
            nodes.pop();
        }
    }
    let mut out = BTreeSet::new();
    let heads: BTreeSet<&str> = kg.triples().iter().map(|t| t.head()).collect();
    for h in heads {
        extend(kg, k, &mut vec![h.to_string()], &mut Vec::new(), &mut out);
    }
    out
}

fn quantity(tail: &str) -> Option<(f64, String)> {
    let mut parts = tail.splitn(2, ' ');
    let v: f64 = parts.next()?.parse().ok()?;
    Some((v, parts.next().unwrap_or("").trim().to_string()))
}

/// Every valid comparison group of `size` numeric triples (same relation and
/// unit, distinct heads and values) with the heads' shared type triples.
pub fn all_comparisons(kg: &KnowledgeGraph, numeric: &BTreeSet<String>, types: &BTreeSet<String>, size: usize) -> BTreeSet<TripleSet> {
    let mut out = BTreeSet::new();
    let cands: Vec<(&Triple, f64, String)> = kg
        .triples()
        .iter()
        .filter(|t| numeric.contains(t.relation()))
        .filter_map(|t| quantity(t.tail()).map(|(v, u)| (t, v, u)))
        .collect();
    let n = cands.len();
    let mut idx: Vec<usize> = Vec::new();
    fn combos(n: usize, size: usize, start: usize, idx: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if idx.len() == size {
            f(idx);
            return;
        }
        for i in start..n {
            idx.push(i);
            combos(n, size, i + 1, idx, f);
            idx.pop();
        }
    }
    let type_pairs = |h: &str| -> BTreeSet<(String, String)> {
        kg.triples()
            .iter()
            .filter(|t| t.head() == h && types.contains(t.relation()))
            .map(|t| (t.relation().to_string(), t.tail().to_string()))
            .collect()
    };
    combos(n, size, 0, &mut idx, &mut |ix| {
        let picked: Vec<&(&Triple, f64, String)> = ix.iter().map(|&i| &cands[i]).collect();
        let same_rel_unit = picked
            .iter()
            .all(|c| c.0.relation() == picked[0].0.relation() && c.2 == picked[0].2);
        let heads: BTreeSet<&str> = picked.iter().map(|c| c.0.head()).collect();
        let values: Vec<f64> = picked.iter().map(|c| c.1).collect();
        let distinct_values = values.iter().enumerate().all(|(i, a)| values[..i].iter().all(|b| b != a));
        if !same_rel_unit || heads.len() != size || !distinct_values {
            return;
        }
        let shared = picked
            .iter()
            .map(|c| type_pairs(c.0.head()))
            .reduce(|a, b| a.intersection(&b).cloned().collect())
            .unwrap();
        let mut set: TripleSet = picked.iter().map(|c| c.0.clone()).collect();
        for c in &picked {
            for (r, t) in &shared {
                set.insert(Triple::new(c.0.head(), r, t).unwrap());
            }
        }
        out.insert(set);
    });
    out
}

/// Every set-operation group: `c` distinct (relation, tail) constraints of some
/// head, all heads meeting every constraint, member count in range.
pub fn all_setops(kg: &KnowledgeGraph, c: usize, min_m: usize, max_m: usize) -> BTreeSet<TripleSet> {
    let mut out = BTreeSet::new();
    let heads: BTreeSet<&str> = kg.triples().iter().map(|t| t.head()).collect();
    let has = |h: &str, r: &str, t: &str| kg.triples().iter().any(|x| x.head() == h && x.relation() == r && x.tail() == t);
    for h in &heads {
        let pairs: Vec<(String, String)> = kg
            .triples()
            .iter()
            .filter(|t| t.head() == *h)
            .map(|t| (t.relation().to_string(), t.tail().to_string()))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if pairs.len() < c {
            continue;
        }
        // all c-subsets by bitmask
        for mask in 0u64..(1u64 << pairs.len().min(20)) {
            if mask.count_ones() as usize != c {
                continue;
            }
            let combo: Vec<&(String, String)> = (0..pairs.len()).filter(|i| mask >> i & 1 == 1).map(|i| &pairs[i]).collect();
            let members: Vec<&str> = heads
                .iter()
                .copied()
                .filter(|m| combo.iter().all(|(r, t)| has(m, r, t)))
                .collect();
            if members.len() < min_m.max(2) || members.len() > max_m {
                continue;
            }
            let set: TripleSet = members
                .iter()
                .flat_map(|m| combo.iter().map(move |(r, t)| Triple::new(m, r, t).unwrap()))
                .collect();
            out.insert(set);
        }
    }
    out
}

// ---- retrieval ----

const WORDS: [&str; 40] = [
    "river", "king", "castle", "music", "film", "height", "queen", "portugal", "tower", "bridge", "sport",
    "university", "league", "team", "album", "novel", "war", "treaty", "island", "mountain", "city", "church",
    "harbor", "market", "poet", "painter", "station", "school", "museum", "garden", "forest", "valley", "lake",
    "desert", "ocean", "empire", "colony", "senate", "court", "palace",
];

/// Deterministic 100-document corpus of 2-5 paragraphs each, skewed vocabulary.
pub fn corpus_100() -> Vec<Document> {
    let mut r = rng(100);
    (0..100)
        .map(|i| {
            let paragraphs = (0..r.gen_range(2..=5))
                .map(|_| {
                    (0..r.gen_range(5..20))
                        .map(|_| {
                            let a = r.gen_range(0..WORDS.len());
                            let b = r.gen_range(0..WORDS.len());
                            WORDS[a.min(b)]
                        })
                        .collect::<Vec<_>>()
                        .join(" ")
                })
                .collect();
            Document {
                id: format!("doc{i:03}"),
                title: format!("{} {}", WORDS[i % WORDS.len()], WORDS[(i * 7 + 3) % WORDS.len()]),
                paragraphs,
            }
        })
        .collect()
}

pub fn random_query(r: &mut ChaCha8Rng) -> String {
    (0..r.gen_range(1..5))
        .map(|_| WORDS[r.gen_range(0..WORDS.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

fn counts(tokens: &[String]) -> HashMap<&str, f64> {
    let mut m = HashMap::new();
    for t in tokens {
        *m.entry(t.as_str()).or_insert(0.0) += 1.0;
    }
    m
}

/// TF x smoothed-IDF cosine against every document, OOV query terms dropped.
pub struct TfIdfOracle {
    idf: HashMap<String, f64>,
    docs: Vec<HashMap<String, f64>>,
}

impl TfIdfOracle {
    pub fn new(docs: &[Document]) -> Self {
        let doc_tokens: Vec<Vec<String>> = docs
            .iter()
            .map(|d| {
                let mut t = toks(&d.title.to_lowercase());
                for p in &d.paragraphs {
                    t.extend(toks(&p.to_lowercase()));
                }
                t
            })
            .collect();
        let mut df: HashMap<String, usize> = HashMap::new();
        for d in &doc_tokens {
            for t in d.iter().collect::<BTreeSet<_>>() {
                *df.entry(t.clone()).or_insert(0) += 1;
            }
        }
        let n = docs.len() as f64;
        let idf: HashMap<String, f64> = df
            .into_iter()
            .map(|(t, c)| (t, ((n + 1.0) / (c as f64 + 1.0)).ln() + 1.0))
            .collect();
        let docs = doc_tokens
            .iter()
            .map(|dt| counts(dt).into_iter().map(|(t, c)| (t.to_string(), c * idf[t])).collect())
            .collect();
        Self { idf, docs }
    }

    pub fn scores(&self, query: &str) -> Vec<f64> {
        let qt = toks(&query.to_lowercase());
        let q: HashMap<&str, f64> = counts(&qt)
            .into_iter()
            .filter_map(|(t, c)| self.idf.get(t).map(|w| (t, c * w)))
            .collect();
        let qn = q.values().map(|w| w * w).sum::<f64>().sqrt();
        self.docs
            .iter()
            .map(|d| {
                let dn = d.values().map(|w| w * w).sum::<f64>().sqrt();
                if qn == 0.0 || dn == 0.0 {
                    return 0.0;
                }
                q.iter().map(|(t, w)| w * d.get(*t).copied().unwrap_or(0.0)).sum::<f64>() / (qn * dn)
            })
            .collect()
    }
}

/// Okapi BM25 of each paragraph within one document.
pub fn bm25_oracle(paragraphs: &[String], query: &str, k1: f64, b: f64) -> Vec<f64> {
    let pt: Vec<Vec<String>> = paragraphs.iter().map(|p| toks(&p.to_lowercase())).collect();
    let n = pt.len() as f64;
    let avg = pt.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let terms: BTreeSet<String> = toks(&query.to_lowercase()).into_iter().collect();
    pt.iter()
        .map(|p| {
            terms
                .iter()
                .map(|t| {
                    let tf = p.iter().filter(|x| *x == t).count() as f64;
                    if tf == 0.0 {
                        return 0.0;
                    }
                    let df = pt.iter().filter(|q| q.contains(t)).count() as f64;
                    let idf = ((n + 1.0) / (df + 1.0)).ln() + 1.0;
                    let norm = if avg > 0.0 { 1.0 - b + b * p.len() as f64 / avg } else { 1.0 };
                    idf * tf * (k1 + 1.0) / (tf + k1 * norm)
                })
                .sum()
        })
        .collect()
}

// ---- samples ----

pub fn qr(id: &str, pattern: PatternKind, query: &str, response: &str, label: Label) -> QRSample {
    QRSample {
        id: id.into(),
        pattern,
        domain: "test".into(),
        query: query.into(),
        response: response.into(),
        label,
        evidence: vec!["[\"a\", \"r\", \"b\"]".into()],
        explanation: format!("{label}. Supporting sentence."),
    }
}

/// Clusters of near-identical samples plus unrelated singletons. Returns the
/// samples in shuffled order and the cluster index of each (None for singletons).
pub fn clustered_samples(seed: u64, clusters: usize, singletons: usize) -> Vec<(QRSample, Option<usize>)> {
    let mut r = rng(seed);
    let mut out = Vec::new();
    let words = |prefix: &str, n: usize| (0..n).map(|j| format!("{prefix}w{j}")).collect::<Vec<_>>().join(" ");
    for c in 0..clusters {
        let q = words(&format!("q{c}"), 10);
        let resp = words(&format!("a{c}"), 12);
        for m in 0..r.gen_range(2..5) {
            // copies differ by at most one repeated word
            let q_m = if m % 2 == 1 { format!("{q} q{c}w0") } else { q.clone() };
            out.push((qr("", PatternKind::Vanilla, &q_m, &resp, Label::Factual), Some(c)));
        }
    }
    for s in 0..singletons {
        out.push((
            qr("", PatternKind::Vanilla, &words(&format!("sq{s}"), 8), &words(&format!("sa{s}"), 8), Label::Factual),
            None,
        ));
    }
    out.shuffle(&mut r);
    for (i, (s, _)) in out.iter_mut().enumerate() {
        s.id = format!("c-{i:03}");
    }
    out
}

pub fn load_eval12() -> Vec<QRSample> {
    hallubench_core::dataset::read_jsonl(&fixtures().join("eval12.jsonl")).unwrap()
}

/// Majority rule: discard when at least `quorum` of the verdicts discard.
pub fn majority_discards(discards: usize, quorum: usize) -> bool {
    discards >= quorum
}

pub fn by_pattern(samples: &[QRSample]) -> BTreeMap<PatternKind, usize> {
    let mut m = BTreeMap::new();
    for s in samples {
        *m.entry(s.pattern).or_insert(0) += 1;
    }
    m
}
