//! Three-annotator review workflow: task assignment, facet verdicts, vote
//! aggregation, an append-only event log, and filtered export.

use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::QRSample;

pub type TaskId = u64;
pub const ANNOTATORS_PER_TASK: usize = 3;
pub const DEFAULT_QUORUM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Pattern consistency, response factuality, evidence logic.
    Quality,
    /// Single similarity facet, used for refinement probes.
    Similarity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Facet {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Overall {
    Keep,
    Discard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TaskStatus {
    Open,
    Decided,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FacetVerdict {
    pub annotator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern_consistency: Option<Facet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_factuality: Option<Facet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence_logic: Option<Facet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<Facet>,
    pub overall: Overall,
    /// Unix seconds; stamped by the service when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
}

impl FacetVerdict {
    pub fn quality(annotator: &str, pc: Facet, rf: Facet, el: Facet) -> Self {
        let overall = if [pc, rf, el].contains(&Facet::Fail) {
            Overall::Discard
        } else {
            Overall::Keep
        };
        Self {
            annotator: annotator.to_string(),
            pattern_consistency: Some(pc),
            response_factuality: Some(rf),
            evidence_logic: Some(el),
            similarity: None,
            overall,
            timestamp: None,
        }
    }

    pub fn similarity(annotator: &str, similar: Facet) -> Self {
        Self {
            annotator: annotator.to_string(),
            pattern_consistency: None,
            response_factuality: None,
            evidence_logic: None,
            similarity: Some(similar),
            overall: if similar == Facet::Fail {
                Overall::Discard
            } else {
                Overall::Keep
            },
            timestamp: None,
        }
    }

    /// Checks facet presence for `kind` and that overall is discard iff some facet failed.
    pub fn validate(&self, kind: TaskKind) -> Result<()> {
        let facets: Vec<Option<Facet>> = match kind {
            TaskKind::Quality => vec![
                self.pattern_consistency,
                self.response_factuality,
                self.evidence_logic,
            ],
            TaskKind::Similarity => vec![self.similarity],
        };
        if facets.iter().any(Option::is_none) {
            return Err(Error::contract(format!("{kind:?} verdict is missing a facet")));
        }
        let any_fail = facets.contains(&Some(Facet::Fail));
        if any_fail != (self.overall == Overall::Discard) {
            return Err(Error::contract(
                "overall must be discard exactly when a facet fails",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewTask {
    pub id: TaskId,
    pub batch: String,
    pub kind: TaskKind,
    pub sample: QRSample,
    pub annotators: Vec<String>,
    pub verdicts: Vec<FacetVerdict>,
    pub status: TaskStatus,
}

impl ReviewTask {
    pub fn is_assigned(&self, annotator: &str) -> bool {
        self.annotators.iter().any(|a| a == annotator)
    }

    pub fn has_voted(&self, annotator: &str) -> bool {
        self.verdicts.iter().any(|v| v.annotator == annotator)
    }

    pub fn discard_votes(&self) -> usize {
        self.verdicts
            .iter()
            .filter(|v| v.overall == Overall::Discard)
            .count()
    }
}

/// Round-robin partition: sample `i` goes to group `i % groups`; group `g` is
/// served by roster members `3g, 3g+1, 3g+2` (mod roster size).
pub fn create_batch(
    batch: &str,
    kind: TaskKind,
    samples: &[QRSample],
    roster: &[String],
    groups: usize,
    first_id: TaskId,
) -> Result<Vec<ReviewTask>> {
    let distinct: HashSet<&String> = roster.iter().collect();
    if distinct.len() != roster.len() {
        return Err(Error::contract("annotator roster has duplicates"));
    }
    if roster.len() < ANNOTATORS_PER_TASK {
        return Err(Error::contract(format!(
            "roster needs at least {ANNOTATORS_PER_TASK} annotators, got {}",
            roster.len()
        )));
    }
    if groups == 0 {
        return Err(Error::contract("group count must be >= 1"));
    }
    Ok(samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let g = i % groups;
            ReviewTask {
                id: first_id + i as TaskId,
                batch: batch.to_string(),
                kind,
                sample: s.clone(),
                annotators: (0..ANNOTATORS_PER_TASK)
                    .map(|j| roster[(ANNOTATORS_PER_TASK * g + j) % roster.len()].clone())
                    .collect(),
                verdicts: Vec::new(),
                status: TaskStatus::Open,
            }
        })
        .collect())
}

/// Discard iff at least `quorum` overall verdicts are discard.
pub fn aggregate(task: &ReviewTask, quorum: usize) -> Result<Overall> {
    if task.status != TaskStatus::Decided {
        return Err(Error::contract(format!("task {} is not decided", task.id)));
    }
    Ok(if task.discard_votes() >= quorum {
        Overall::Discard
    } else {
        Overall::Keep
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub task: TaskId,
    pub sample_id: String,
    pub keep: usize,
    pub discard: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<Overall>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchDecision {
    pub batch: String,
    pub kind: TaskKind,
    pub quorum: usize,
    pub kept: Vec<String>,
    pub discarded: Vec<String>,
    pub pending: Vec<TaskId>,
    pub tallies: Vec<Tally>,
}

impl BatchDecision {
    pub fn is_complete(&self) -> bool {
        self.pending.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchInfo {
    pub id: String,
    pub kind: TaskKind,
    pub quorum: usize,
    pub tasks: Vec<TaskId>,
}

/// One line of the review log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum ReviewEvent {
    BatchCreated {
        batch: BatchInfo,
        tasks: Vec<ReviewTask>,
    },
    Verdict {
        task: TaskId,
        verdict: FacetVerdict,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReviewState {
    batches: BTreeMap<String, BatchInfo>,
    tasks: BTreeMap<TaskId, ReviewTask>,
}

impl ReviewState {
    pub fn replay(events: &[ReviewEvent]) -> Result<ReviewState> {
        let mut s = ReviewState::default();
        for e in events {
            s.apply(e.clone())?;
        }
        Ok(s)
    }

    fn check(&self, event: &ReviewEvent) -> Result<()> {
        match event {
            ReviewEvent::BatchCreated { batch, tasks } => {
                if self.batches.contains_key(&batch.id) {
                    return Err(Error::contract(format!("batch {} already exists", batch.id)));
                }
                if let Some(t) = tasks.iter().find(|t| self.tasks.contains_key(&t.id)) {
                    return Err(Error::contract(format!("task id {} already exists", t.id)));
                }
                if batch.quorum == 0 || batch.quorum > ANNOTATORS_PER_TASK {
                    return Err(Error::contract(format!("quorum must be 1..=3, got {}", batch.quorum)));
                }
                Ok(())
            }
            ReviewEvent::Verdict { task, verdict } => {
                let t = self
                    .tasks
                    .get(task)
                    .ok_or_else(|| Error::NotFound(format!("task {task}")))?;
                if !t.is_assigned(&verdict.annotator) {
                    return Err(Error::Unauthorized {
                        annotator: verdict.annotator.clone(),
                        task: *task,
                    });
                }
                if t.has_voted(&verdict.annotator) {
                    return Err(Error::Conflict {
                        annotator: verdict.annotator.clone(),
                        task: *task,
                    });
                }
                verdict.validate(t.kind)
            }
        }
    }

    /// Validates then applies; state is untouched on error.
    pub fn apply(&mut self, event: ReviewEvent) -> Result<()> {
        self.check(&event)?;
        match event {
            ReviewEvent::BatchCreated { batch, tasks } => {
                for t in tasks {
                    self.tasks.insert(t.id, t);
                }
                self.batches.insert(batch.id.clone(), batch);
            }
            ReviewEvent::Verdict { task, verdict } => {
                let t = self.tasks.get_mut(&task).expect("checked");
                t.verdicts.push(verdict);
                if t.verdicts.len() == ANNOTATORS_PER_TASK {
                    t.status = TaskStatus::Decided;
                }
            }
        }
        Ok(())
    }

    pub fn task(&self, id: TaskId) -> Option<&ReviewTask> {
        self.tasks.get(&id)
    }

    pub fn tasks(&self) -> impl Iterator<Item = &ReviewTask> {
        self.tasks.values()
    }

    pub fn batch(&self, id: &str) -> Option<&BatchInfo> {
        self.batches.get(id)
    }

    pub fn batches(&self) -> impl Iterator<Item = &BatchInfo> {
        self.batches.values()
    }

    pub fn next_task_id(&self) -> TaskId {
        self.tasks.keys().next_back().map_or(1, |k| k + 1)
    }

    pub fn knows_annotator(&self, annotator: &str) -> bool {
        self.tasks.values().any(|t| t.is_assigned(annotator))
    }

    /// Lowest-id open task assigned to `annotator` that they have not voted on.
    pub fn next_for(&self, annotator: &str) -> Result<Option<&ReviewTask>> {
        if !self.knows_annotator(annotator) {
            return Err(Error::Unauthorized {
                annotator: annotator.to_string(),
                task: 0,
            });
        }
        Ok(self.tasks.values().find(|t| {
            t.status == TaskStatus::Open && t.is_assigned(annotator) && !t.has_voted(annotator)
        }))
    }

    pub fn decision(&self, batch: &str) -> Result<BatchDecision> {
        let info = self
            .batches
            .get(batch)
            .ok_or_else(|| Error::NotFound(format!("batch {batch}")))?;
        let mut d = BatchDecision {
            batch: info.id.clone(),
            kind: info.kind,
            quorum: info.quorum,
            kept: Vec::new(),
            discarded: Vec::new(),
            pending: Vec::new(),
            tallies: Vec::new(),
        };
        for id in &info.tasks {
            let t = &self.tasks[id];
            let decision = aggregate(t, info.quorum).ok();
            match decision {
                Some(Overall::Keep) => d.kept.push(t.sample.id.clone()),
                Some(Overall::Discard) => d.discarded.push(t.sample.id.clone()),
                None => d.pending.push(t.id),
            }
            let discard = t.discard_votes();
            d.tallies.push(Tally {
                task: t.id,
                sample_id: t.sample.id.clone(),
                keep: t.verdicts.len() - discard,
                discard,
                decision,
            });
        }
        Ok(d)
    }
}

pub fn parse_log(text: &str) -> Result<Vec<ReviewEvent>> {
    crate::dataset::parse_jsonl(text)
}

struct Writer {
    state: ReviewState,
    log: Option<BufWriter<File>>,
}

/// Concurrent review service. Mutations go through one writer lock and are
/// logged before they are applied; readers get immutable snapshots.
pub struct ReviewService {
    writer: Mutex<Writer>,
    snapshot: RwLock<Arc<ReviewState>>,
}

impl ReviewService {
    pub fn in_memory() -> Self {
        Self::from_state(ReviewState::default(), None)
    }

    /// Rebuilds state from `log_path` (if present) and appends future events to it.
    pub fn open(log_path: &Path) -> Result<Self> {
        let state = if log_path.exists() {
            let text = crate::dataset::read_text(log_path)?;
            ReviewState::replay(&parse_log(&text)?)?
        } else {
            ReviewState::default()
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(log_path)
            .map_err(|source| Error::Input {
                path: log_path.to_path_buf(),
                source,
            })?;
        Ok(Self::from_state(state, Some(BufWriter::new(file))))
    }

    fn from_state(state: ReviewState, log: Option<BufWriter<File>>) -> Self {
        Self {
            snapshot: RwLock::new(Arc::new(state.clone())),
            writer: Mutex::new(Writer { state, log }),
        }
    }

    pub fn snapshot(&self) -> Arc<ReviewState> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    fn commit(&self, event: ReviewEvent) -> Result<()> {
        let mut w = self.writer.lock().expect("writer lock");
        self.commit_locked(&mut w, event)
    }

    fn commit_locked(&self, w: &mut Writer, event: ReviewEvent) -> Result<()> {
        w.state.check(&event)?;
        if let Some(log) = w.log.as_mut() {
            serde_json::to_writer(&mut *log, &event)?;
            log.write_all(b"\n")?;
            log.flush()?;
        }
        w.state.apply(event)?;
        *self.snapshot.write().expect("snapshot lock") = Arc::new(w.state.clone());
        Ok(())
    }

    pub fn create_batch(
        &self,
        batch: &str,
        kind: TaskKind,
        samples: &[QRSample],
        roster: &[String],
        groups: usize,
        quorum: usize,
    ) -> Result<Vec<TaskId>> {
        let mut w = self.writer.lock().expect("writer lock");
        let first = w.state.next_task_id();
        let tasks = create_batch(batch, kind, samples, roster, groups, first)?;
        let ids: Vec<TaskId> = tasks.iter().map(|t| t.id).collect();
        self.commit_locked(&mut w, ReviewEvent::BatchCreated {
            batch: BatchInfo {
                id: batch.to_string(),
                kind,
                quorum,
                tasks: ids.clone(),
            },
            tasks,
        })?;
        Ok(ids)
    }

    /// Routes a refinement probe to one trio as a similarity batch under the majority rule.
    pub fn create_probe_batch(
        &self,
        batch: &str,
        probe: &[QRSample],
        roster: &[String],
    ) -> Result<Vec<TaskId>> {
        self.create_batch(batch, TaskKind::Similarity, probe, roster, 1, DEFAULT_QUORUM)
    }

    pub fn next_task(&self, annotator: &str) -> Result<Option<ReviewTask>> {
        Ok(self.snapshot().next_for(annotator)?.cloned())
    }

    pub fn submit(&self, task: TaskId, mut verdict: FacetVerdict) -> Result<ReviewTask> {
        if verdict.timestamp.is_none() {
            verdict.timestamp = Some(
                SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map_or(0, |d| d.as_secs()),
            );
        }
        self.commit(ReviewEvent::Verdict { task, verdict })?;
        Ok(self.snapshot().task(task).expect("task exists").clone())
    }

    pub fn summary(&self, batch: &str) -> Result<BatchDecision> {
        self.snapshot().decision(batch)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExportReport {
    pub kept: usize,
    pub discarded: usize,
}

/// Source lines whose record id was kept, byte-for-byte and in source order.
pub fn export_filtered(decision: &BatchDecision, source: &str) -> Result<(String, ExportReport)> {
    if !decision.is_complete() {
        return Err(Error::contract(format!(
            "undecided tasks: {}",
            decision
                .pending
                .iter()
                .map(|t| t.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        )));
    }
    let kept: HashSet<&str> = decision.kept.iter().map(String::as_str).collect();
    let mut out = String::with_capacity(source.len());
    let mut n = 0;
    for (i, line) in source.split_inclusive('\n').enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(line).map_err(|e| Error::Schema {
            id: format!("line {}", i + 1),
            message: e.to_string(),
        })?;
        let id = v.get("id").and_then(Value::as_str).unwrap_or_default();
        if kept.contains(id) {
            out.push_str(line);
            n += 1;
        }
    }
    Ok((
        out,
        ExportReport {
            kept: n,
            discarded: decision.discarded.len(),
        },
    ))
}
