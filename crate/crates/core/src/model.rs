//! Shared data model: triples, factuality patterns, labels, and dataset records.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One `(head, relation, tail)` fact.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "(String, String, String)", into = "(String, String, String)")]
pub struct Triple {
    head: String,
    relation: String,
    tail: String,
}

impl Triple {
    /// Builds a triple, trimming each field. All three must be non-empty after trimming.
    pub fn new(head: &str, relation: &str, tail: &str) -> Result<Self> {
        let (h, r, t) = (head.trim(), relation.trim(), tail.trim());
        if h.is_empty() || r.is_empty() || t.is_empty() {
            return Err(Error::contract(format!(
                "triple fields must be non-empty: ({head:?}, {relation:?}, {tail:?})"
            )));
        }
        Ok(Self {
            head: h.to_string(),
            relation: r.to_string(),
            tail: t.to_string(),
        })
    }

    pub fn head(&self) -> &str {
        &self.head
    }

    pub fn relation(&self) -> &str {
        &self.relation
    }

    pub fn tail(&self) -> &str {
        &self.tail
    }

    /// Parses the bracketed form produced by `Display`, e.g. `["A", "r", "B"]`.
    pub fn parse_serialized(s: &str) -> Result<Self> {
        let (h, r, t): (String, String, String) = serde_json::from_str(s.trim())
            .map_err(|e| Error::contract(format!("not a serialized triple: {s:?} ({e})")))?;
        Self::new(&h, &r, &t)
    }
}

impl TryFrom<(String, String, String)> for Triple {
    type Error = Error;

    fn try_from((h, r, t): (String, String, String)) -> Result<Self> {
        Triple::new(&h, &r, &t)
    }
}

impl From<Triple> for (String, String, String) {
    fn from(t: Triple) -> Self {
        (t.head, t.relation, t.tail)
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let q = |s: &str| serde_json::to_string(s).expect("string serialization");
        write!(
            f,
            "[{}, {}, {}]",
            q(&self.head),
            q(&self.relation),
            q(&self.tail)
        )
    }
}

/// The four factuality patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    Vanilla,
    MultiHops,
    Comparison,
    SetOperation,
}

impl PatternKind {
    pub const ALL: [PatternKind; 4] = [
        PatternKind::Vanilla,
        PatternKind::MultiHops,
        PatternKind::Comparison,
        PatternKind::SetOperation,
    ];

    /// Wire name used in dataset records.
    pub fn as_str(self) -> &'static str {
        match self {
            PatternKind::Vanilla => "vanilla",
            PatternKind::MultiHops => "multi_hops",
            PatternKind::Comparison => "comparison",
            PatternKind::SetOperation => "set_operation",
        }
    }

    /// Column title used in rendered reports.
    pub fn title(self) -> &'static str {
        match self {
            PatternKind::Vanilla => "Vanilla",
            PatternKind::MultiHops => "Multi-hops",
            PatternKind::Comparison => "Comparison",
            PatternKind::SetOperation => "Set-Operation",
        }
    }

    pub fn is_kg(self) -> bool {
        !matches!(self, PatternKind::Vanilla)
    }
}

impl fmt::Display for PatternKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PatternKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PatternKind::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::contract(format!("unknown pattern {s:?}")))
    }
}

/// Gold factuality label. NON-FACTUAL is the positive class for scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "FACTUAL")]
    Factual,
    #[serde(rename = "NON-FACTUAL")]
    NonFactual,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Factual => "FACTUAL",
            Label::NonFactual => "NON-FACTUAL",
        }
    }

    pub fn opposite(self) -> Label {
        match self {
            Label::Factual => Label::NonFactual,
            Label::NonFactual => Label::Factual,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "FACTUAL" => Ok(Label::Factual),
            "NON-FACTUAL" => Ok(Label::NonFactual),
            other => Err(Error::contract(format!("unknown label {other:?}"))),
        }
    }
}

/// A label as read back from model output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PredictedLabel {
    #[serde(rename = "FACTUAL")]
    Factual,
    #[serde(rename = "NON-FACTUAL")]
    NonFactual,
    #[serde(rename = "UNPARSEABLE")]
    Unparseable,
}

impl PredictedLabel {
    pub fn label(self) -> Option<Label> {
        match self {
            PredictedLabel::Factual => Some(Label::Factual),
            PredictedLabel::NonFactual => Some(Label::NonFactual),
            PredictedLabel::Unparseable => None,
        }
    }

    pub fn is_parsed(self) -> bool {
        self != PredictedLabel::Unparseable
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PredictedLabel::Factual => "FACTUAL",
            PredictedLabel::NonFactual => "NON-FACTUAL",
            PredictedLabel::Unparseable => "UNPARSEABLE",
        }
    }
}

impl From<Label> for PredictedLabel {
    fn from(l: Label) -> Self {
        match l {
            Label::Factual => PredictedLabel::Factual,
            Label::NonFactual => PredictedLabel::NonFactual,
        }
    }
}

impl fmt::Display for PredictedLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One benchmark record. Field names are the dataset wire format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QRSample {
    pub id: String,
    pub pattern: PatternKind,
    pub domain: String,
    pub query: String,
    pub response: String,
    pub label: Label,
    pub evidence: Vec<String>,
    pub explanation: String,
}

/// Gold verdict of a fact-verification claim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ClaimVerdict {
    Supported,
    Refuted,
}

impl ClaimVerdict {
    pub fn label(self) -> Label {
        match self {
            ClaimVerdict::Supported => Label::Factual,
            ClaimVerdict::Refuted => Label::NonFactual,
        }
    }
}

/// A FEVER-style claim with its evidence snippets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimRecord {
    pub claim: String,
    pub verdict: ClaimVerdict,
    #[serde(default)]
    pub evidence: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
}
