//! Two-stage lexical evidence retrieval: TF-IDF document choice, then BM25
//! paragraph selection inside the chosen document.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{parse_jsonl, read_text};
use crate::error::{Error, Result};
use crate::metrics::tokenize;
use crate::scalar::Scalar;

pub const INDEX_FILE: &str = "index.json";
pub const TOOL_HEADER: &str = "Returned by the tool:";
pub const NO_EVIDENCE: &str = "Returned by the tool: no evidence found.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub paragraphs: Vec<String>,
}

/// Smoothed inverse document frequency `ln((n+1)/(df+1)) + 1`.
pub fn smoothed_idf<S: Scalar>(n: usize, df: usize) -> S {
    (S::from_count(n + 1) / S::from_count(df + 1)).ln() + S::one()
}

pub fn term_counts<'a>(tokens: impl IntoIterator<Item = &'a String>) -> BTreeMap<String, usize> {
    let mut tf = BTreeMap::new();
    for t in tokens {
        *tf.entry(t.clone()).or_insert(0) += 1;
    }
    tf
}

/// Document collection with a document-level term index. Only counts are
/// stored; scores are computed at the requested precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    docs: Vec<Document>,
    doc_tf: Vec<BTreeMap<String, usize>>,
    df: BTreeMap<String, usize>,
    by_id: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct IndexFile {
    documents: Vec<Document>,
    df: BTreeMap<String, usize>,
}

impl Corpus {
    pub fn build(docs: Vec<Document>) -> Result<Corpus> {
        if docs.is_empty() {
            return Err(Error::contract("corpus is empty"));
        }
        let mut by_id = HashMap::new();
        for (i, d) in docs.iter().enumerate() {
            if d.paragraphs.is_empty() {
                return Err(Error::Schema {
                    id: d.id.clone(),
                    message: "document has no paragraphs".into(),
                });
            }
            if by_id.insert(d.id.clone(), i).is_some() {
                return Err(Error::Schema {
                    id: d.id.clone(),
                    message: "duplicate document id".into(),
                });
            }
        }
        let doc_tf: Vec<BTreeMap<String, usize>> = docs
            .iter()
            .map(|d| {
                let mut toks = tokenize(&d.title);
                for p in &d.paragraphs {
                    toks.extend(tokenize(p));
                }
                term_counts(&toks)
            })
            .collect();
        let mut df = BTreeMap::new();
        for tf in &doc_tf {
            for term in tf.keys() {
                *df.entry(term.clone()).or_insert(0) += 1;
            }
        }
        Ok(Corpus {
            docs,
            doc_tf,
            df,
            by_id,
        })
    }

    pub fn parse(text: &str) -> Result<Corpus> {
        Self::build(parse_jsonl(text)?)
    }

    pub fn load(path: &Path) -> Result<Corpus> {
        Self::parse(&read_text(path)?)
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }

    pub fn document(&self, id: &str) -> Option<&Document> {
        self.by_id.get(id).map(|&i| &self.docs[i])
    }

    pub fn df(&self, term: &str) -> usize {
        self.df.get(term).copied().unwrap_or(0)
    }

    pub fn idf<S: Scalar>(&self, term: &str) -> S {
        smoothed_idf(self.len(), self.df(term))
    }

    fn tfidf<S: Scalar>(&self, tf: &BTreeMap<String, usize>) -> BTreeMap<String, S> {
        tf.iter()
            .filter(|(t, _)| self.df.contains_key(*t))
            .map(|(t, &c)| (t.clone(), S::from_count(c) * self.idf::<S>(t)))
            .collect()
    }

    /// Cosine between the TF-IDF vectors of `query` and every document, in corpus order.
    pub fn document_scores<S: Scalar>(&self, query: &str) -> Vec<S> {
        let q = self.tfidf::<S>(&term_counts(&tokenize(query)));
        let q_norm = q.values().map(|&w| w * w).sum::<S>().sqrt();
        self.doc_tf
            .iter()
            .map(|tf| {
                if q_norm == S::zero() {
                    return S::zero();
                }
                let d = self.tfidf::<S>(tf);
                let d_norm = d.values().map(|&w| w * w).sum::<S>().sqrt();
                let dot: S = q
                    .iter()
                    .filter_map(|(t, &w)| d.get(t).map(|&v| v * w))
                    .sum();
                if d_norm == S::zero() {
                    S::zero()
                } else {
                    dot / (q_norm * d_norm)
                }
            })
            .collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let file = IndexFile {
            documents: self.docs.clone(),
            df: self.df.clone(),
        };
        fs::write(dir.join(INDEX_FILE), serde_json::to_vec(&file)?)?;
        Ok(())
    }

    pub fn load_index(dir: &Path) -> Result<Corpus> {
        let path = dir.join(INDEX_FILE);
        let text = read_text(&path)?;
        let file: IndexFile = serde_json::from_str(&text)?;
        let corpus = Self::build(file.documents)?;
        if corpus.df != file.df {
            return Err(Error::Schema {
                id: path.display().to_string(),
                message: "stored document frequencies do not match documents".into(),
            });
        }
        Ok(corpus)
    }
}

/// Best TF-IDF document, ties to the smallest id; `None` when every score is zero.
pub fn retrieve_document<'c, S: Scalar>(corpus: &'c Corpus, query: &str) -> Option<&'c Document> {
    let scores = corpus.document_scores::<S>(query);
    let mut best: Option<(usize, S)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s <= S::zero() {
            continue;
        }
        best = match best {
            None => Some((i, s)),
            Some((j, b)) if s > b || (s == b && corpus.docs[i].id < corpus.docs[j].id) => Some((i, s)),
            keep => keep,
        };
    }
    best.map(|(i, _)| &corpus.docs[i])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Bm25Params<S: Scalar = f64> {
    pub k1: S,
    pub b: S,
}

impl<S: Scalar> Bm25Params<S> {
    pub fn new(k1: S, b: S) -> Result<Self> {
        if !(k1 > S::zero()) || !(b >= S::zero() && b <= S::one()) {
            return Err(Error::contract(format!("invalid BM25 params k1={k1} b={b}")));
        }
        Ok(Self { k1, b })
    }
}

impl<S: Scalar> Default for Bm25Params<S> {
    fn default() -> Self {
        Self {
            k1: S::lit(1.5),
            b: S::lit(0.75),
        }
    }
}

/// Paragraph-level statistics of one document.
#[derive(Debug, Clone, PartialEq)]
pub struct ParagraphStats {
    pub tf: Vec<BTreeMap<String, usize>>,
    pub lengths: Vec<usize>,
    pub df: BTreeMap<String, usize>,
}

impl ParagraphStats {
    pub fn new(paragraphs: &[String]) -> Self {
        let toks: Vec<Vec<String>> = paragraphs.iter().map(|p| tokenize(p)).collect();
        let tf: Vec<_> = toks.iter().map(|t| term_counts(t)).collect();
        let mut df = BTreeMap::new();
        for m in &tf {
            for term in m.keys() {
                *df.entry(term.clone()).or_insert(0) += 1;
            }
        }
        Self {
            lengths: toks.iter().map(Vec::len).collect(),
            tf,
            df,
        }
    }

    pub fn len(&self) -> usize {
        self.tf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tf.is_empty()
    }

    pub fn avg_len<S: Scalar>(&self) -> S {
        if self.is_empty() {
            return S::zero();
        }
        S::from_count(self.lengths.iter().sum()) / S::from_count(self.len())
    }
}

/// BM25 of paragraph `p` over the distinct terms of `query_tokens`.
pub fn bm25_score<S: Scalar>(
    query_tokens: &[String],
    p: usize,
    stats: &ParagraphStats,
    params: &Bm25Params<S>,
) -> S {
    let avg = stats.avg_len::<S>();
    let len = S::from_count(stats.lengths[p]);
    let norm = if avg > S::zero() {
        S::one() - params.b + params.b * len / avg
    } else {
        S::one()
    };
    let terms: BTreeSet<&String> = query_tokens.iter().collect();
    terms
        .into_iter()
        .map(|t| {
            let tf = stats.tf[p].get(t).copied().unwrap_or(0);
            if tf == 0 {
                return S::zero();
            }
            let tf = S::from_count(tf);
            let idf: S = smoothed_idf(stats.len(), stats.df.get(t).copied().unwrap_or(0));
            idf * tf * (params.k1 + S::one()) / (tf + params.k1 * norm)
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct ScoredParagraph<S: Scalar = f64> {
    pub index: usize,
    pub text: String,
    pub score: S,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct EvidenceBundle<S: Scalar = f64> {
    pub doc_id: String,
    pub title: String,
    pub paragraphs: Vec<ScoredParagraph<S>>,
}

/// Top `k` paragraphs of `doc_id` by BM25, descending, ties by paragraph order.
pub fn top_paragraphs<S: Scalar>(
    corpus: &Corpus,
    doc_id: &str,
    query: &str,
    k: usize,
    params: &Bm25Params<S>,
) -> Result<EvidenceBundle<S>> {
    let doc = corpus
        .document(doc_id)
        .ok_or_else(|| Error::NotFound(format!("document {doc_id}")))?;
    let stats = ParagraphStats::new(&doc.paragraphs);
    let q = tokenize(query);
    let mut scored: Vec<ScoredParagraph<S>> = doc
        .paragraphs
        .iter()
        .enumerate()
        .map(|(i, text)| ScoredParagraph {
            index: i,
            text: text.clone(),
            score: bm25_score(&q, i, &stats, params),
        })
        .collect();
    // stable sort keeps paragraph order among equal scores
    scored.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(std::cmp::Ordering::Equal));
    scored.truncate(k);
    Ok(EvidenceBundle {
        doc_id: doc.id.clone(),
        title: doc.title.clone(),
        paragraphs: scored,
    })
}

pub fn format_evidence_block<S: Scalar>(bundle: &EvidenceBundle<S>) -> String {
    let mut out = String::from(TOOL_HEADER);
    for (i, p) in bundle.paragraphs.iter().enumerate() {
        out.push_str(&format!("\n{}. {}", i + 1, p.text.trim()));
    }
    out
}

/// Evidence block for `query`: best document, then its top two paragraphs.
pub fn search_tool(corpus: &Corpus, query: &str) -> String {
    let Some(doc) = retrieve_document::<f64>(corpus, query) else {
        return NO_EVIDENCE.to_string();
    };
    match top_paragraphs::<f64>(corpus, &doc.id, query, 2, &Bm25Params::default()) {
        Ok(bundle) => format_evidence_block(&bundle),
        Err(_) => NO_EVIDENCE.to_string(),
    }
}

/// Anything that turns a query into an evidence block.
pub trait Searcher: Send + Sync {
    fn search(&self, query: &str) -> Result<String>;
}

impl Searcher for Corpus {
    fn search(&self, query: &str) -> Result<String> {
        Ok(search_tool(self, query))
    }
}
