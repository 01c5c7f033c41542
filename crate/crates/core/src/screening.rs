//! Near-duplicate screening of query/response contexts.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::tokenize;
use crate::model::QRSample;
use crate::providers::{text_hash, Transcript};
use crate::retrieval::{smoothed_idf, term_counts};
use crate::scalar::Scalar;

pub const DEFAULT_THRESHOLD: f64 = 0.92;

pub trait EmbeddingProvider<S: Scalar>: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<S>>;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<S>>> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

/// TF x smoothed-IDF vectors over a vocabulary fitted on a text collection, L2-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct LexicalEmbedder {
    vocab: BTreeMap<String, (usize, usize)>,
    n_docs: usize,
}

impl LexicalEmbedder {
    pub fn fit<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        let mut n_docs = 0;
        for t in texts {
            n_docs += 1;
            for term in term_counts(&tokenize(t)).into_keys() {
                *df.entry(term).or_insert(0) += 1;
            }
        }
        let vocab = df
            .into_iter()
            .enumerate()
            .map(|(i, (term, df))| (term, (i, df)))
            .collect();
        Self { vocab, n_docs }
    }

    /// Fitted on every query and response of `samples`.
    pub fn for_samples(samples: &[QRSample]) -> Self {
        Self::fit(
            samples
                .iter()
                .flat_map(|s| [s.query.as_str(), s.response.as_str()]),
        )
    }

    pub fn dim(&self) -> usize {
        self.vocab.len()
    }

    pub fn lexical_embed<S: Scalar>(&self, text: &str) -> Vec<S> {
        let mut v = vec![S::zero(); self.dim()];
        for (term, count) in term_counts(&tokenize(text)) {
            if let Some(&(i, df)) = self.vocab.get(&term) {
                v[i] = S::from_count(count) * smoothed_idf::<S>(self.n_docs, df);
            }
        }
        let norm = v.iter().map(|&x| x * x).sum::<S>().sqrt();
        if norm > S::zero() {
            for x in &mut v {
                *x = *x / norm;
            }
        }
        v
    }
}

impl<S: Scalar> EmbeddingProvider<S> for LexicalEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<S>> {
        Ok(self.lexical_embed(text))
    }
}

/// Vectors replayed from a transcript keyed by text hash.
pub struct TranscriptEmbedder {
    transcript: Transcript,
}

impl TranscriptEmbedder {
    pub fn new(transcript: Transcript) -> Self {
        Self { transcript }
    }
}

impl<S: Scalar> EmbeddingProvider<S> for TranscriptEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<S>> {
        let h = text_hash(text);
        self.transcript
            .vector(&h)
            .map(|v| v.iter().map(|&x| S::lit(x)).collect())
            .ok_or(Error::TranscriptMiss(h))
    }
}

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine<S: Scalar>(a: &[S], b: &[S]) -> S {
    assert_eq!(a.len(), b.len(), "embedding dimensions differ");
    let dot: S = a.iter().zip(b).map(|(&x, &y)| x * y).sum();
    let na = a.iter().map(|&x| x * x).sum::<S>().sqrt();
    let nb = b.iter().map(|&x| x * x).sum::<S>().sqrt();
    if na == S::zero() || nb == S::zero() {
        log::warn!("event=zero_norm_embedding action=similarity_zero");
        return S::zero();
    }
    dot / (na * nb)
}

/// Mean of query-query and response-response cosine.
pub fn context_similarity<S: Scalar>(
    a: &QRSample,
    b: &QRSample,
    provider: &dyn EmbeddingProvider<S>,
) -> Result<S> {
    let v = provider.embed_batch(&[&a.query, &b.query, &a.response, &b.response])?;
    Ok((cosine(&v[0], &v[1]) + cosine(&v[2], &v[3])) * S::half())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Removed<S: Scalar = f64> {
    pub id: String,
    pub nearest_kept: String,
    pub similarity: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ScreenReport<S: Scalar = f64> {
    pub kept: Vec<String>,
    pub removed: Vec<Removed<S>>,
    pub threshold: S,
}

/// Greedy first-wins scan: a sample is removed when its context similarity to
/// any already-kept sample reaches `threshold`. A kept sample with the same
/// query and the opposite label is the sample's own pair-mate and is skipped.
pub fn dedup<S: Scalar>(
    samples: &[QRSample],
    provider: &dyn EmbeddingProvider<S>,
    threshold: S,
) -> Result<ScreenReport<S>> {
    if !(threshold > S::zero() && threshold <= S::one()) {
        return Err(Error::contract(format!("threshold must be in (0,1], got {threshold}")));
    }
    // one embedding call per distinct text
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut texts: Vec<&str> = Vec::new();
    for s in samples {
        for t in [s.query.as_str(), s.response.as_str()] {
            index.entry(t).or_insert_with(|| {
                texts.push(t);
                texts.len() - 1
            });
        }
    }
    let vectors = provider.embed_batch(&texts)?;
    if vectors.len() != texts.len() {
        return Err(Error::Protocol(format!(
            "embedder returned {} vectors for {} texts",
            vectors.len(),
            texts.len()
        )));
    }
    let vec_of = |t: &str| &vectors[index[t]];

    let mut kept: Vec<&QRSample> = Vec::new();
    let mut report = ScreenReport {
        kept: Vec::new(),
        removed: Vec::new(),
        threshold,
    };
    for s in samples {
        let mut nearest: Option<(&QRSample, S)> = None;
        for k in &kept {
            if k.query == s.query && k.label != s.label {
                continue;
            }
            let sim = (cosine(vec_of(&s.query), vec_of(&k.query))
                + cosine(vec_of(&s.response), vec_of(&k.response)))
                * S::half();
            if sim >= threshold && nearest.is_none_or(|(_, best)| sim > best) {
                nearest = Some((k, sim));
            }
        }
        match nearest {
            Some((k, sim)) => report.removed.push(Removed {
                id: s.id.clone(),
                nearest_kept: k.id.clone(),
                similarity: sim,
            }),
            None => {
                kept.push(s);
                report.kept.push(s.id.clone());
            }
        }
    }
    Ok(report)
}

/// Samples whose ids were kept, in input order.
pub fn apply_report<S: Scalar>(samples: &[QRSample], report: &ScreenReport<S>) -> Vec<QRSample> {
    let keep: std::collections::HashSet<&str> = report.kept.iter().map(String::as_str).collect();
    samples
        .iter()
        .filter(|s| keep.contains(s.id.as_str()))
        .cloned()
        .collect()
}
