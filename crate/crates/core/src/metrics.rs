//! FactCls and ExpMatch scoring.
//!
//! FactCls is micro-F1 over binary factuality labels with NON-FACTUAL as the
//! positive class. ExpMatch weighs a unigram-F1 match of the explanation body
//! against a ROUGE-L match of its head/tail framing sentences:
//!
//! ```text
//! combined = alpha * score_bd + (1 - alpha) * score_ht
//! ```
//!
//! An output whose label cannot be parsed scores zero on every ExpMatch field.
//!
//! Tokenization: lowercase, split on whitespace, strip leading/trailing
//! punctuation and symbols from each token, drop empties. Internal hyphens are
//! kept, so `"NON-FACTUAL."` tokenizes to `["non-factual"]`.

use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Label, PredictedLabel};
use crate::scalar::{harmonic, Scalar};

pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

/// Multiset-overlap F1 between two token lists.
pub fn unigram_f1<S: Scalar>(candidate: &[String], reference: &[String]) -> S {
    if candidate.is_empty() || reference.is_empty() {
        return S::zero();
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in reference {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in candidate {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return S::zero();
    }
    let o = S::from_count(overlap);
    harmonic(
        o / S::from_count(candidate.len()),
        o / S::from_count(reference.len()),
    )
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Balanced ROUGE-L F-measure.
pub fn rouge_l<S: Scalar>(candidate: &[String], reference: &[String]) -> S {
    if candidate.is_empty() || reference.is_empty() {
        return S::zero();
    }
    let l = lcs_len(candidate, reference);
    if l == 0 {
        return S::zero();
    }
    let l = S::from_count(l);
    harmonic(
        l / S::from_count(candidate.len()),
        l / S::from_count(reference.len()),
    )
}

/// Tokenized explanation split into framing (head + optional "therefore" tail) and body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segments {
    pub head_tail: Vec<String>,
    pub body: Vec<String>,
}

fn leading_label_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)^\s*(non-factual|factual)\b[\s.:!,;\-]*").expect("valid regex")
    })
}

/// Splits on `.`, `!`, `?` when followed by whitespace or end of text.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            let at_boundary = match chars.peek() {
                None => true,
                Some((_, next)) => next.is_whitespace(),
            };
            if at_boundary {
                let s = text[start..i].trim();
                if !s.is_empty() {
                    out.push(s);
                }
                start = i + c.len_utf8();
            }
        }
    }
    let rest = text[start..].trim();
    if !rest.is_empty() {
        out.push(rest);
    }
    out
}

pub fn segment_explanation(text: &str) -> Segments {
    let stripped = match leading_label_re().find(text) {
        Some(m) => &text[m.end()..],
        None => text,
    };
    let sentences = split_sentences(stripped);
    if sentences.is_empty() {
        return Segments {
            head_tail: Vec::new(),
            body: Vec::new(),
        };
    }
    let last = sentences.len() - 1;
    let has_tail = last > 0 && sentences[last].to_lowercase().starts_with("therefore");
    let mut head_tail = tokenize(sentences[0]);
    let body_end = if has_tail {
        head_tail.extend(tokenize(sentences[last]));
        last
    } else {
        sentences.len()
    };
    let body: Vec<String> = sentences[1..body_end]
        .iter()
        .flat_map(|s| tokenize(s))
        .collect();
    let body = if body.is_empty() {
        head_tail.clone()
    } else {
        body
    };
    Segments { head_tail, body }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ExpMatchConfig<S: Scalar = f64> {
    pub alpha: S,
}

impl<S: Scalar> ExpMatchConfig<S> {
    pub fn new(alpha: S) -> Result<Self> {
        if !(alpha >= S::zero() && alpha <= S::one()) {
            return Err(Error::contract(format!("alpha must be in [0,1], got {alpha}")));
        }
        Ok(Self { alpha })
    }
}

impl<S: Scalar> Default for ExpMatchConfig<S> {
    fn default() -> Self {
        Self { alpha: S::lit(0.7) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ExpMatchBreakdown<S: Scalar = f64> {
    pub score_bd: S,
    pub score_ht: S,
    pub combined: S,
}

impl<S: Scalar> ExpMatchBreakdown<S> {
    pub fn zero() -> Self {
        Self {
            score_bd: S::zero(),
            score_ht: S::zero(),
            combined: S::zero(),
        }
    }

    pub fn from_parts(score_bd: S, score_ht: S, cfg: &ExpMatchConfig<S>) -> Self {
        Self {
            score_bd,
            score_ht,
            combined: cfg.alpha * score_bd + (S::one() - cfg.alpha) * score_ht,
        }
    }
}

pub fn exp_match<S: Scalar>(
    candidate: &str,
    reference: &str,
    cfg: &ExpMatchConfig<S>,
    label_parsed: bool,
) -> ExpMatchBreakdown<S> {
    if !label_parsed {
        return ExpMatchBreakdown::zero();
    }
    let cand = segment_explanation(candidate);
    let gold = segment_explanation(reference);
    ExpMatchBreakdown::from_parts(
        unigram_f1(&cand.body, &gold.body),
        rouge_l(&cand.head_tail, &gold.head_tail),
        cfg,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelOutcome {
    pub gold: Label,
    pub predicted: PredictedLabel,
}

impl LabelOutcome {
    pub fn new(gold: Label, predicted: PredictedLabel) -> Self {
        Self { gold, predicted }
    }
}

/// Confusion counts with NON-FACTUAL as the positive class. UNPARSEABLE is a
/// negative prediction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn from_outcomes(outcomes: &[LabelOutcome]) -> Self {
        outcomes.iter().fold(Confusion::default(), |mut c, o| {
            let pred_pos = o.predicted == PredictedLabel::NonFactual;
            match (o.gold == Label::NonFactual, pred_pos) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
            c
        })
    }

    pub fn f1<S: Scalar>(&self) -> S {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            S::zero()
        } else {
            S::from_count(2 * self.tp) / S::from_count(denom)
        }
    }
}

pub fn fact_cls<S: Scalar>(outcomes: &[LabelOutcome]) -> Result<S> {
    if outcomes.is_empty() {
        return Err(Error::contract("fact_cls needs at least one outcome"));
    }
    Ok(Confusion::from_outcomes(outcomes).f1())
}

fn label_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(non-)?factual\b").expect("valid regex"))
}

/// Reads the first factuality label mentioned in free text.
pub fn extract_label(text: &str) -> PredictedLabel {
    // Leftmost match wins, and "non-" is part of the match, so a NON-FACTUAL
    // token is never mistaken for a standalone FACTUAL.
    match label_re().captures(text) {
        Some(c) if c.get(1).is_some() => PredictedLabel::NonFactual,
        Some(_) => PredictedLabel::Factual,
        None => PredictedLabel::Unparseable,
    }
}

/// The first run of letters and hyphens, matched against the two label names.
pub fn leading_label(text: &str) -> Option<Label> {
    let start = text.find(|c: char| c.is_alphabetic())?;
    let rest = &text[start..];
    let end = rest
        .find(|c: char| !(c.is_alphabetic() || c == '-'))
        .unwrap_or(rest.len());
    match rest[..end].trim_end_matches('-').to_uppercase().as_str() {
        "FACTUAL" => Some(Label::Factual),
        "NON-FACTUAL" => Some(Label::NonFactual),
        _ => None,
    }
}
