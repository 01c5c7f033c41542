use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::{prompt_hash, GenerationParams, TextProvider};
use crate::error::{Error, Result};

/// One transcript line: either a completion keyed by prompt hash or a vector keyed by text hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TranscriptEntry {
    Completion { phash: String, completion: String },
    Vector { thash: String, vector: Vec<f64> },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Transcript {
    completions: BTreeMap<String, String>,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl Transcript {
    pub fn parse(text: &str) -> Result<Transcript> {
        let mut t = Transcript::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: TranscriptEntry = serde_json::from_str(line).map_err(|e| {
                Error::Protocol(format!("transcript line {}: {e}", i + 1))
            })?;
            t.insert(entry);
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Transcript> {
        if !path.exists() {
            return Ok(Transcript::default());
        }
        let text = std::fs::read_to_string(path).map_err(|source| Error::Input {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn insert(&mut self, entry: TranscriptEntry) {
        match entry {
            TranscriptEntry::Completion { phash, completion } => {
                self.completions.insert(phash, completion);
            }
            TranscriptEntry::Vector { thash, vector } => {
                self.vectors.insert(thash, vector);
            }
        }
    }

    pub fn completion(&self, phash: &str) -> Option<&str> {
        self.completions.get(phash).map(String::as_str)
    }

    pub fn vector(&self, thash: &str) -> Option<&[f64]> {
        self.vectors.get(thash).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.completions.len() + self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Serializes in hash order, one entry per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (phash, completion) in &self.completions {
            let e = TranscriptEntry::Completion {
                phash: phash.clone(),
                completion: completion.clone(),
            };
            out.push_str(&serde_json::to_string(&e).expect("serializable entry"));
            out.push('\n');
        }
        for (thash, vector) in &self.vectors {
            let e = TranscriptEntry::Vector {
                thash: thash.clone(),
                vector: vector.clone(),
            };
            out.push_str(&serde_json::to_string(&e).expect("serializable entry"));
            out.push('\n');
        }
        out
    }
}

pub enum ReplayMode {
    /// Misses are hard errors.
    Strict,
    /// Misses go to the inner provider and are recorded.
    Record(Box<dyn TextProvider>),
}

pub struct ReplayProvider {
    name: String,
    transcript: RwLock<Transcript>,
    mode: ReplayMode,
    log: Mutex<Option<BufWriter<File>>>,
}

impl ReplayProvider {
    pub fn strict(transcript: Transcript) -> Self {
        Self {
            name: "replay".into(),
            transcript: RwLock::new(transcript),
            mode: ReplayMode::Strict,
            log: Mutex::new(None),
        }
    }

    pub fn recording(inner: Box<dyn TextProvider>, transcript: Transcript) -> Self {
        Self {
            name: inner.identity().to_string(),
            transcript: RwLock::new(transcript),
            mode: ReplayMode::Record(inner),
            log: Mutex::new(None),
        }
    }

    /// Appends every newly recorded pair to `path`.
    pub fn with_log(self, path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| Error::Input {
                path: path.to_path_buf(),
                source,
            })?;
        *self.log.lock().expect("log lock") = Some(BufWriter::new(file));
        Ok(self)
    }

    pub fn with_name(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    pub fn snapshot(&self) -> Transcript {
        self.transcript.read().expect("transcript lock").clone()
    }

    fn record(&self, phash: String, completion: &str) -> Result<()> {
        let entry = TranscriptEntry::Completion {
            phash,
            completion: completion.to_string(),
        };
        // log lock held across the map insert so file order matches insertion order
        let mut log = self.log.lock().expect("log lock");
        if let Some(w) = log.as_mut() {
            serde_json::to_writer(&mut *w, &entry)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        self.transcript
            .write()
            .expect("transcript lock")
            .insert(entry);
        Ok(())
    }
}

impl TextProvider for ReplayProvider {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String> {
        let phash = prompt_hash(prompt, params);
        if let Some(c) = self
            .transcript
            .read()
            .expect("transcript lock")
            .completion(&phash)
        {
            return Ok(c.to_string());
        }
        match &self.mode {
            ReplayMode::Strict => Err(Error::TranscriptMiss(phash)),
            ReplayMode::Record(inner) => {
                let completion = inner.complete(prompt, params)?;
                self.record(phash, &completion)?;
                Ok(completion)
            }
        }
    }

    fn identity(&self) -> &str {
        &self.name
    }
}
