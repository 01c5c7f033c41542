//! Provider spec strings to provider objects.
//!
//! Text providers: `mock`, `mock:<name>`, `http`, `replay:<path>`,
//! `record:<path>` (records the HTTP provider) and `record-mock:<path>`.
//! Embedders: `lexical`, `http`, an `http(s)://` endpoint, or `replay:<path>`.

use std::path::Path;
use std::sync::Arc;

use hallubench_core::config::ProviderSettings;
use hallubench_core::pipeline::Providers;
use hallubench_core::providers::{MockProvider, ReplayProvider, TextProvider, Transcript};
use hallubench_core::screening::{EmbeddingProvider, TranscriptEmbedder};
use hallubench_core::{Error, Result};
use hallubench_net::{HttpConfig, HttpEmbedder, HttpTextProvider};

/// Env prefix for a role's HTTP settings.
fn env_prefix(role: &str) -> &'static str {
    if role == "guardian" {
        "GUARDIAN"
    } else {
        "PROVIDER"
    }
}

fn http(role: &str) -> Result<HttpTextProvider> {
    Ok(HttpTextProvider::new(HttpConfig::from_env(env_prefix(role))?)?.with_name(role))
}

pub fn text_provider(spec: &str, role: &str) -> Result<Arc<dyn TextProvider>> {
    let spec = spec.trim();
    if spec == "mock" {
        return Ok(Arc::new(MockProvider::new(role)));
    }
    if spec == "http" {
        return Ok(Arc::new(http(role)?));
    }
    if let Some(name) = spec.strip_prefix("mock:") {
        return Ok(Arc::new(MockProvider::new(name)));
    }
    if let Some(path) = spec.strip_prefix("replay:") {
        let t = Transcript::load(Path::new(path))?;
        if t.is_empty() {
            log::warn!("event=empty_transcript role={role} path={path}");
        }
        return Ok(Arc::new(ReplayProvider::strict(t).with_name(role)));
    }
    let (path, inner): (&str, Box<dyn TextProvider>) = if let Some(p) = spec.strip_prefix("record-mock:") {
        (p, Box::new(MockProvider::new(role)))
    } else if let Some(p) = spec.strip_prefix("record:") {
        (p, Box::new(http(role)?))
    } else {
        return Err(Error::contract(format!("unknown provider spec {spec:?} for {role}")));
    };
    let path = Path::new(path);
    let existing = Transcript::load(path)?;
    Ok(Arc::new(
        ReplayProvider::recording(inner, existing)
            .with_log(path)?
            .with_name(role),
    ))
}

/// `None` means lexical embeddings fitted on the data being screened.
pub fn embedder(spec: &str) -> Result<Option<Arc<dyn EmbeddingProvider<f64>>>> {
    let spec = spec.trim();
    if spec == "lexical" {
        return Ok(None);
    }
    if spec == "http" {
        return Ok(Some(Arc::new(HttpEmbedder::from_env()?)));
    }
    if spec.starts_with("http://") || spec.starts_with("https://") {
        return Ok(Some(Arc::new(HttpEmbedder::new(HttpConfig::new(spec))?)));
    }
    if let Some(path) = spec.strip_prefix("replay:") {
        return Ok(Some(Arc::new(TranscriptEmbedder::new(Transcript::load(Path::new(path))?))));
    }
    Err(Error::contract(format!("unknown embedder spec {spec:?}")))
}

pub fn providers(p: &ProviderSettings) -> Result<Providers> {
    Ok(Providers {
        generator: text_provider(&p.generator, "generator")?,
        judge: text_provider(&p.judge, "judge")?,
        guardian: text_provider(&p.guardian, "guardian")?,
        manager: text_provider(&p.manager, "manager")?,
        embedder: embedder(&p.embedder)?,
        searcher: None,
    })
}
