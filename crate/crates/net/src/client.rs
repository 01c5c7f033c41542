//! Blocking HTTP clients. Safe to share across threads.

use std::time::Duration;

use hallubench_core::providers::{GenerationParams, TextProvider};
use hallubench_core::retrieval::{Searcher, NO_EVIDENCE, TOOL_HEADER};
use hallubench_core::scalar::Scalar;
use hallubench_core::screening::EmbeddingProvider;
use hallubench_core::{Error, Result};
use reqwest::blocking::{Client, RequestBuilder};
use reqwest::StatusCode;
use serde::Deserialize;
use serde_json::{json, Value};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);
pub const DEFAULT_RETRIES: u32 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct HttpConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout: Duration,
    pub retries: u32,
    /// Sleep before retry `n` is `backoff * 2^n`.
    pub backoff: Duration,
}

impl HttpConfig {
    pub fn new(base_url: &str) -> Self {
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key: None,
            model: "default".into(),
            timeout: DEFAULT_TIMEOUT,
            retries: DEFAULT_RETRIES,
            backoff: Duration::from_millis(250),
        }
    }

    /// Reads `<PREFIX>_BASE_URL`, `_API_KEY`, `_MODEL`, `_TIMEOUT_SECS` and
    /// `_RETRIES`. A missing model falls back to `PROVIDER_MODEL`.
    pub fn from_vars(prefix: &str, var: impl Fn(&str) -> Option<String>) -> Result<Self> {
        let key = |k: &str| var(&format!("{prefix}_{k}")).filter(|v| !v.trim().is_empty());
        let base = key("BASE_URL").ok_or_else(|| Error::contract(format!("{prefix}_BASE_URL is not set")))?;
        let mut cfg = Self::new(&base);
        cfg.api_key = key("API_KEY");
        if let Some(m) = key("MODEL").or_else(|| var("PROVIDER_MODEL")) {
            cfg.model = m;
        }
        if let Some(t) = key("TIMEOUT_SECS") {
            let secs: f64 = t
                .parse()
                .map_err(|_| Error::contract(format!("{prefix}_TIMEOUT_SECS: bad number {t:?}")))?;
            cfg.timeout = Duration::from_secs_f64(secs.max(0.0));
        }
        if let Some(r) = key("RETRIES") {
            cfg.retries = r
                .parse()
                .map_err(|_| Error::contract(format!("{prefix}_RETRIES: bad count {r:?}")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_env(prefix: &str) -> Result<Self> {
        Self::from_vars(prefix, |k| std::env::var(k).ok())
    }

    pub fn validate(&self) -> Result<()> {
        if self.timeout.is_zero() {
            return Err(Error::contract("timeout must be > 0"));
        }
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return Err(Error::contract(format!("base URL must be http(s): {}", self.base_url)));
        }
        Ok(())
    }

    fn client(&self) -> Result<Client> {
        self.validate()?;
        Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| Error::Transport(format!("client setup: {e}")))
    }

    fn authorize(&self, req: RequestBuilder) -> RequestBuilder {
        match &self.api_key {
            Some(k) => req.bearer_auth(k),
            None => req,
        }
    }
}

fn retryable(status: StatusCode) -> bool {
    status.is_server_error() || status == StatusCode::TOO_MANY_REQUESTS
}

/// Sends with retries on transport failures, 5xx and 429. Returns the body of the first success.
fn send(cfg: &HttpConfig, what: &str, build: impl Fn() -> RequestBuilder) -> Result<String> {
    let mut last = String::new();
    for attempt in 0..=cfg.retries {
        if attempt > 0 {
            std::thread::sleep(cfg.backoff * 2u32.saturating_pow(attempt - 1));
        }
        match cfg.authorize(build()).send() {
            Err(e) => last = e.to_string(),
            Ok(resp) => {
                let status = resp.status();
                let body = resp.text().map_err(|e| Error::Transport(format!("{what}: reading body: {e}")))?;
                if status.is_success() {
                    return Ok(body);
                }
                last = format!("HTTP {status}: {}", body.chars().take(200).collect::<String>());
                if !retryable(status) {
                    return Err(Error::Transport(format!("{what}: {last}")));
                }
            }
        }
        if attempt < cfg.retries {
            log::warn!("event=http_retry target={what} attempt={} error={last:?}", attempt + 1);
        }
    }
    Err(Error::Transport(format!("{what}: {last} (after {} attempts)", cfg.retries + 1)))
}

/// Chat-completions client.
pub struct HttpTextProvider {
    cfg: HttpConfig,
    client: Client,
    name: String,
}

impl HttpTextProvider {
    pub fn new(cfg: HttpConfig) -> Result<Self> {
        let client = cfg.client()?;
        let name = format!("http:{}", cfg.model);
        Ok(Self { cfg, client, name })
    }

    pub fn with_name(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    pub fn endpoint(&self) -> String {
        if self.cfg.base_url.ends_with("/chat/completions") {
            self.cfg.base_url.clone()
        } else {
            format!("{}/chat/completions", self.cfg.base_url)
        }
    }

    pub fn request_body(&self, prompt: &str, params: &GenerationParams) -> Value {
        json!({
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_tokens,
            "frequency_penalty": params.frequency_penalty,
        })
    }
}

pub fn parse_completion(body: &str) -> Result<String> {
    let v: Value = serde_json::from_str(body).map_err(|e| Error::Protocol(format!("completion body: {e}")))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| Error::Protocol("completion body has no choices[0].message.content".into()))
}

impl TextProvider for HttpTextProvider {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String> {
        params.validate()?;
        let url = self.endpoint();
        let body = self.request_body(prompt, params);
        let text = send(&self.cfg, &url, || self.client.post(&url).json(&body))?;
        parse_completion(&text)
    }

    fn identity(&self) -> &str {
        &self.name
    }
}

#[derive(Deserialize)]
struct Vectors {
    vectors: Vec<Vec<f64>>,
}

/// POSTs `{"texts": [...]}` to the endpoint and expects `{"vectors": [[...]]}`.
pub struct HttpEmbedder {
    cfg: HttpConfig,
    client: Client,
    pub batch_size: usize,
}

impl HttpEmbedder {
    pub fn new(cfg: HttpConfig) -> Result<Self> {
        let client = cfg.client()?;
        Ok(Self {
            cfg,
            client,
            batch_size: 64,
        })
    }

    /// Endpoint from `EMBED_BASE_URL`.
    pub fn from_env() -> Result<Self> {
        Self::new(HttpConfig::from_env("EMBED")?)
    }

    fn fetch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        let url = &self.cfg.base_url;
        let body = json!({ "texts": texts });
        let text = send(&self.cfg, url, || self.client.post(url).json(&body))?;
        let v: Vectors = serde_json::from_str(&text).map_err(|e| Error::Protocol(format!("embedding body: {e}")))?;
        if v.vectors.len() != texts.len() {
            return Err(Error::Protocol(format!(
                "embedder returned {} vectors for {} texts",
                v.vectors.len(),
                texts.len()
            )));
        }
        Ok(v.vectors)
    }
}

impl<S: Scalar> EmbeddingProvider<S> for HttpEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<S>> {
        Ok(EmbeddingProvider::<S>::embed_batch(self, &[text])?.remove(0))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<S>>> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.batch_size.max(1)) {
            for v in self.fetch(chunk)? {
                out.push(v.into_iter().map(S::lit).collect());
            }
        }
        if let Some(d) = out.first().map(Vec::len) {
            if out.iter().any(|v| v.len() != d) {
                return Err(Error::Protocol("embedding vectors differ in dimension".into()));
            }
        }
        Ok(out)
    }
}

#[derive(Deserialize)]
struct SearchHits {
    paragraphs: Vec<String>,
}

/// External search adapter: POSTs `{"query": q}` and expects `{"paragraphs": [...]}`,
/// best first. The first two paragraphs become the evidence block.
pub struct HttpSearcher {
    cfg: HttpConfig,
    client: Client,
}

impl HttpSearcher {
    pub fn new(cfg: HttpConfig) -> Result<Self> {
        let client = cfg.client()?;
        Ok(Self { cfg, client })
    }

    /// Endpoint from `SEARCH_BASE_URL`.
    pub fn from_env() -> Result<Self> {
        Self::new(HttpConfig::from_env("SEARCH")?)
    }
}

impl Searcher for HttpSearcher {
    fn search(&self, query: &str) -> Result<String> {
        let url = &self.cfg.base_url;
        let body = json!({ "query": query });
        let text = send(&self.cfg, url, || self.client.post(url).json(&body))?;
        let hits: SearchHits = serde_json::from_str(&text).map_err(|e| Error::Protocol(format!("search body: {e}")))?;
        let top: Vec<&String> = hits.paragraphs.iter().filter(|p| !p.trim().is_empty()).take(2).collect();
        if top.is_empty() {
            return Ok(NO_EVIDENCE.to_string());
        }
        let mut out = String::from(TOOL_HEADER);
        for (i, p) in top.iter().enumerate() {
            out.push_str(&format!("\n{}. {}", i + 1, p.trim()));
        }
        Ok(out)
    }
}
