//! Text-completion provider interface, generation parameters, prompt hashing,
//! and the offline providers (rule mock, echo, scripted, transcript replay).
//! HTTP clients live in the `hallubench-net` crate.

mod mock;
mod replay;

use std::collections::VecDeque;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use mock::MockProvider;
pub use replay::{ReplayMode, ReplayProvider, Transcript, TranscriptEntry};

/// Sampling parameters sent with every completion request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub frequency_penalty: f64,
}

impl GenerationParams {
    /// Settings for benchmark synthesis: temperature 1.0, top-p 1.0, 2048 tokens, no frequency penalty.
    pub const SYNTHESIS: GenerationParams = GenerationParams {
        temperature: 1.0,
        top_p: 1.0,
        max_tokens: 2048,
        frequency_penalty: 0.0,
    };

    /// Settings for judging: as synthesis, but temperature 0.2.
    pub const EVALUATION: GenerationParams = GenerationParams {
        temperature: 0.2,
        ..GenerationParams::SYNTHESIS
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0) {
            return Err(Error::contract("temperature must be >= 0"));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::contract("top_p must be in (0,1]"));
        }
        if self.max_tokens == 0 {
            return Err(Error::contract("max_tokens must be > 0"));
        }
        Ok(())
    }

    fn canonical(&self) -> String {
        format!(
            "temperature={};top_p={};max_tokens={};frequency_penalty={}",
            self.temperature, self.top_p, self.max_tokens, self.frequency_penalty
        )
    }
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self::SYNTHESIS
    }
}

/// Hex SHA-256 over the UTF-8 prompt, a NUL separator, and the canonical params.
pub fn prompt_hash(prompt: &str, params: &GenerationParams) -> String {
    let mut h = Sha256::new();
    h.update(prompt.as_bytes());
    h.update([0u8]);
    h.update(params.canonical().as_bytes());
    hex::encode(h.finalize())
}

pub fn text_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub trait TextProvider: Send + Sync {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String>;

    fn identity(&self) -> &str;
}

impl<T: TextProvider + ?Sized> TextProvider for std::sync::Arc<T> {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String> {
        (**self).complete(prompt, params)
    }

    fn identity(&self) -> &str {
        (**self).identity()
    }
}

impl<T: TextProvider + ?Sized> TextProvider for &T {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String> {
        (**self).complete(prompt, params)
    }

    fn identity(&self) -> &str {
        (**self).identity()
    }
}

/// Returns the prompt unchanged.
#[derive(Debug, Default, Clone)]
pub struct EchoProvider;

impl TextProvider for EchoProvider {
    fn complete(&self, prompt: &str, _params: &GenerationParams) -> Result<String> {
        Ok(prompt.to_string())
    }

    fn identity(&self) -> &str {
        "echo"
    }
}

/// Pops canned completions in order; once one is left it repeats forever.
pub struct ScriptedProvider {
    name: String,
    script: Mutex<VecDeque<Result<String>>>,
    calls: Mutex<Vec<String>>,
}

impl ScriptedProvider {
    pub fn new(name: &str, completions: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self::with_results(name, completions.into_iter().map(|c| Ok(c.into())))
    }

    pub fn with_results(name: &str, script: impl IntoIterator<Item = Result<String>>) -> Self {
        Self {
            name: name.to_string(),
            script: Mutex::new(script.into_iter().collect()),
            calls: Mutex::new(Vec::new()),
        }
    }

    /// Prompts received so far.
    pub fn calls(&self) -> Vec<String> {
        self.calls.lock().expect("calls lock").clone()
    }
}

impl TextProvider for ScriptedProvider {
    fn complete(&self, prompt: &str, _params: &GenerationParams) -> Result<String> {
        self.calls.lock().expect("calls lock").push(prompt.to_string());
        let mut script = self.script.lock().expect("script lock");
        let next = if script.len() > 1 {
            script.pop_front()
        } else {
            script.front().map(|r| match r {
                Ok(s) => Ok(s.clone()),
                Err(e) => Err(Error::Transport(e.to_string())),
            })
        };
        next.unwrap_or_else(|| Err(Error::Transport("script exhausted".into())))
    }

    fn identity(&self) -> &str {
        &self.name
    }
}
