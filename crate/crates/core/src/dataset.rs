//! JSONL reading/writing, claim ingestion, and dataset schema validation.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::leading_label;
use crate::model::{ClaimRecord, Label, PatternKind, QRSample};

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Input {
        path: path.to_path_buf(),
        source,
    })
}

pub fn parse_jsonl<T: DeserializeOwned>(text: &str) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Schema {
                id: format!("line {}", i + 1),
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    parse_jsonl(&read_text(path)?)
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> Result<String> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    fs::write(path, to_jsonl(items)?)?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|source| Error::Input {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(sha256_hex(&bytes))
}

/// Claims with usable evidence, plus the count of rejected (evidence-less) records.
pub fn parse_claims(text: &str) -> Result<(Vec<ClaimRecord>, usize)> {
    let all: Vec<ClaimRecord> = parse_jsonl(text)?;
    let total = all.len();
    let kept: Vec<ClaimRecord> = all
        .into_iter()
        .filter(|c| {
            let ok = !c.claim.trim().is_empty() && c.evidence.iter().any(|e| !e.trim().is_empty());
            if !ok {
                log::warn!("event=claim_rejected reason=no_evidence claim={:?}", c.claim);
            }
            ok
        })
        .collect();
    let rejected = total - kept.len();
    Ok((kept, rejected))
}

pub fn load_claims(path: &Path) -> Result<(Vec<ClaimRecord>, usize)> {
    parse_claims(&read_text(path)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub line: usize,
    pub id: Option<String>,
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub records: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

const TEXT_FIELDS: [&str; 4] = ["id", "domain", "query", "response"];

/// Per-line check of the dataset record contract.
pub fn validate_text(text: &str) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        report.records += 1;
        let line_no = i + 1;
        let mut push = |id: &Option<String>, field: &str, message: String| {
            report.violations.push(Violation {
                line: line_no,
                id: id.clone(),
                field: field.to_string(),
                message,
            })
        };
        let obj = match serde_json::from_str::<Value>(line) {
            Ok(Value::Object(o)) => o,
            Ok(_) => {
                push(&None, "", "record is not a JSON object".into());
                continue;
            }
            Err(e) => {
                push(&None, "", format!("invalid JSON: {e}"));
                continue;
            }
        };
        let id = obj.get("id").and_then(Value::as_str).map(str::to_string);

        for field in TEXT_FIELDS {
            match obj.get(field) {
                None => push(&id, field, "missing field".into()),
                Some(Value::String(s)) if field != "domain" && s.trim().is_empty() => {
                    push(&id, field, "must be non-empty".into())
                }
                Some(Value::String(_)) => {}
                Some(_) => push(&id, field, "must be a string".into()),
            }
        }
        if let Some(id) = &id {
            if !seen.insert(id.clone()) {
                push(&Some(id.clone()), "id", "duplicate id".into());
            }
        }

        let pattern = match obj.get("pattern") {
            None => {
                push(&id, "pattern", "missing field".into());
                None
            }
            Some(v) => match v.as_str().map(str::parse::<PatternKind>) {
                Some(Ok(p)) => Some(p),
                _ => {
                    push(&id, "pattern", format!("unknown pattern {v}"));
                    None
                }
            },
        };

        let label = match obj.get("label") {
            None => {
                push(&id, "label", "missing field".into());
                None
            }
            Some(v) => match serde_json::from_value::<Label>(v.clone()) {
                Ok(l) => Some(l),
                Err(_) => {
                    push(&id, "label", format!("unknown label {v}"));
                    None
                }
            },
        };

        match obj.get("evidence") {
            None => push(&id, "evidence", "missing field".into()),
            Some(Value::Array(items)) => {
                if items.iter().any(|e| !e.is_string()) {
                    push(&id, "evidence", "items must be strings".into());
                } else if items.is_empty() && pattern.is_some_and(PatternKind::is_kg) {
                    push(&id, "evidence", "must be non-empty for KG patterns".into());
                }
            }
            Some(_) => push(&id, "evidence", "must be an array".into()),
        }

        match obj.get("explanation") {
            None => push(&id, "explanation", "missing field".into()),
            Some(Value::String(s)) => {
                if let Some(l) = label {
                    if leading_label(s) != Some(l) {
                        push(&id, "explanation", format!("must begin with {l}"));
                    }
                }
            }
            Some(_) => push(&id, "explanation", "must be a string".into()),
        }
    }
    report
}

/// Typed-record counterpart of [`validate_text`] for records already in memory.
pub fn check_record(s: &QRSample) -> Result<()> {
    let fail = |message: &str| {
        Err(Error::Schema {
            id: s.id.clone(),
            message: message.to_string(),
        })
    };
    if s.id.trim().is_empty() {
        return fail("empty id");
    }
    if s.query.trim().is_empty() || s.response.trim().is_empty() {
        return fail("empty query or response");
    }
    if s.pattern.is_kg() && s.evidence.is_empty() {
        return fail("evidence must be non-empty for KG patterns");
    }
    if leading_label(&s.explanation) != Some(s.label) {
        return fail("explanation must begin with the label");
    }
    Ok(())
}

pub fn validate_dataset(path: &Path) -> Result<ValidationReport> {
    Ok(validate_text(&read_text(path)?))
}
