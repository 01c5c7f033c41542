//! In-memory knowledge graph loaded from tab-separated triple files.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Triple;

/// Immutable triple store with an out-edge index and a `(relation, tail) -> heads` value index.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    triples: Vec<Triple>,
    out_edges: BTreeMap<String, Vec<usize>>,
    value_index: BTreeMap<(String, String), BTreeSet<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RejectedLine {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub accepted: usize,
    pub filtered: usize,
    pub rejects: Vec<RejectedLine>,
}

impl KnowledgeGraph {
    pub fn from_triples(triples: impl IntoIterator<Item = Triple>) -> Self {
        let mut kg = KnowledgeGraph::default();
        for t in triples {
            kg.push(t);
        }
        kg
    }

    fn push(&mut self, t: Triple) {
        let idx = self.triples.len();
        self.out_edges
            .entry(t.head().to_string())
            .or_default()
            .push(idx);
        self.value_index
            .entry((t.relation().to_string(), t.tail().to_string()))
            .or_default()
            .insert(t.head().to_string());
        self.triples.push(t);
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn out_edges(&self, entity: &str) -> impl Iterator<Item = &Triple> {
        self.out_edges
            .get(entity)
            .into_iter()
            .flatten()
            .map(|&i| &self.triples[i])
    }

    /// Entities with at least one outgoing edge, in sorted order.
    pub fn heads(&self) -> impl Iterator<Item = &str> {
        self.out_edges.keys().map(String::as_str)
    }

    pub fn heads_with(&self, relation: &str, tail: &str) -> Option<&BTreeSet<String>> {
        self.value_index
            .get(&(relation.to_string(), tail.to_string()))
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.out_edges(t.head()).any(|e| e == t)
    }
}

/// Parses one line of a triple file. `Ok(None)` for blank and comment lines.
pub fn parse_triple_line(line: &str) -> std::result::Result<Option<Triple>, String> {
    let line = line.trim_end_matches(['\r', '\n']);
    if line.trim().is_empty() || line.starts_with('#') {
        return Ok(None);
    }
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 3 {
        return Err(format!("expected 3 tab-separated fields, found {}", fields.len()));
    }
    Triple::new(fields[0], fields[1], fields[2])
        .map(Some)
        .map_err(|_| "empty field".to_string())
}

/// Parses triple-file text. An empty allowlist accepts every relation.
pub fn parse_triples(
    text: &str,
    allowlist: &BTreeSet<String>,
) -> Result<(KnowledgeGraph, LoadReport)> {
    let mut kg = KnowledgeGraph::default();
    let mut report = LoadReport::default();
    for (i, line) in text.lines().enumerate() {
        match parse_triple_line(line) {
            Ok(None) => {}
            Ok(Some(t)) => {
                if allowlist.is_empty() || allowlist.contains(t.relation()) {
                    kg.push(t);
                    report.accepted += 1;
                } else {
                    report.filtered += 1;
                }
            }
            Err(reason) => report.rejects.push(RejectedLine { line: i + 1, reason }),
        }
    }
    if !report.rejects.is_empty() {
        log::warn!(
            "event=triples_rejected count={} first_line={}",
            report.rejects.len(),
            report.rejects[0].line
        );
    }
    if kg.is_empty() {
        return Err(Error::EmptyGraph);
    }
    Ok((kg, report))
}

pub fn load_triples(
    path: &Path,
    allowlist: &BTreeSet<String>,
) -> Result<(KnowledgeGraph, LoadReport)> {
    let text = fs::read_to_string(path).map_err(|source| Error::Input {
        path: path.to_path_buf(),
        source,
    })?;
    parse_triples(&text, allowlist)
}
