//! The value function: how close a coalition's response is to the
//! all-tools baseline. Two backends: term-frequency cosine (offline,
//! deterministic) and cosine over remote text embeddings.

use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::agent::cache::{load_lines, open_append};
use crate::error::{Error, Result};
use crate::model::{AgentResponse, BackendKind};
use crate::util::sha256_hex;

pub trait SimilarityBackend: Send + Sync {
    fn kind(&self) -> BackendKind;

    fn model_tag(&self) -> Option<&str> {
        None
    }

    fn similarity(&self, a: &str, b: &str) -> Result<f64>;

    /// Remote requests issued so far.
    fn request_count(&self) -> usize {
        0
    }
}

fn term_counts(text: &str) -> HashMap<String, u64> {
    let mut counts = HashMap::new();
    for tok in text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
    {
        *counts.entry(tok.to_lowercase()).or_insert(0) += 1;
    }
    counts
}

/// Cosine of lowercase term-frequency vectors. Two token-free texts are
/// identical (1); one token-free text against anything else scores 0.
pub fn tf_cosine(a: &str, b: &str) -> f64 {
    let ca = term_counts(a);
    let cb = term_counts(b);
    match (ca.is_empty(), cb.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let dot: u128 = ca
        .iter()
        .filter_map(|(t, &x)| cb.get(t).map(|&y| x as u128 * y as u128))
        .sum();
    let na: u128 = ca.values().map(|&x| x as u128 * x as u128).sum();
    let nb: u128 = cb.values().map(|&x| x as u128 * x as u128).sum();
    // Integer norms keep identical texts at exactly 1.0.
    let denom = ((na * nb) as f64).sqrt();
    (dot as f64 / denom).min(1.0)
}

/// Plain cosine between two real vectors.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TfCosine;

impl SimilarityBackend for TfCosine {
    fn kind(&self) -> BackendKind {
        BackendKind::TfCosine
    }

    fn similarity(&self, a: &str, b: &str) -> Result<f64> {
        Ok(tf_cosine(a, b))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub base_url: String,
    pub model: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub cache_path: Option<PathBuf>,
    #[serde(default = "default_timeout")]
    pub request_timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff")]
    pub retry_backoff_ms: u64,
}

fn default_timeout() -> u64 {
    60
}
fn default_retries() -> u32 {
    2
}
fn default_backoff() -> u64 {
    500
}

impl EmbeddingConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        EmbeddingConfig {
            base_url: base_url.into(),
            model: model.into(),
            api_key_env: None,
            cache_path: None,
            request_timeout_secs: default_timeout(),
            max_retries: default_retries(),
            retry_backoff_ms: default_backoff(),
        }
    }
}

/// Backend selection as it appears in configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityConfig {
    pub kind: BackendKind,
    #[serde(default)]
    pub embedding: Option<EmbeddingConfig>,
}

impl SimilarityConfig {
    pub fn tf() -> Self {
        SimilarityConfig {
            kind: BackendKind::TfCosine,
            embedding: None,
        }
    }

    pub fn build(&self) -> Result<Box<dyn SimilarityBackend>> {
        match self.kind {
            BackendKind::TfCosine => Ok(Box::new(TfCosine)),
            BackendKind::EmbeddingCosine => {
                let cfg = self.embedding.clone().ok_or(Error::MissingEmbeddingConfig)?;
                Ok(Box::new(EmbeddingBackend::new(cfg)))
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct EmbeddingLine {
    model: String,
    text_sha256: String,
    vector: Vec<f64>,
}

#[derive(Default)]
struct CacheInner {
    vectors: HashMap<(String, String), Vec<f64>>,
    dims: HashMap<String, usize>,
    file: Option<File>,
}

/// Embedding vectors keyed by (model tag, text hash). All vectors under
/// one model tag share a dimensionality.
pub struct EmbeddingCache {
    inner: Mutex<CacheInner>,
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        EmbeddingCache {
            inner: Mutex::new(CacheInner::default()),
        }
    }

    pub fn open(path: &std::path::Path) -> Self {
        let mut inner = CacheInner::default();
        match load_lines::<EmbeddingLine>(path) {
            Ok((lines, _)) => {
                for l in lines {
                    let dim = *inner.dims.entry(l.model.clone()).or_insert(l.vector.len());
                    if dim != l.vector.len() {
                        warn!("{}: skipping vector with dimension {} (expected {dim})", path.display(), l.vector.len());
                        continue;
                    }
                    inner.vectors.insert((l.model, l.text_sha256), l.vector);
                }
            }
            Err(e) => warn!("embedding cache {}: {e}; continuing in memory", path.display()),
        }
        // A truncated final line would corrupt the next append.
        let needs_newline = std::fs::read(path)
            .map(|b| !b.is_empty() && !b.ends_with(b"\n"))
            .unwrap_or(false);
        match open_append(path) {
            Ok(mut f) => {
                if needs_newline {
                    let _ = f.write_all(b"\n");
                }
                inner.file = Some(f);
            }
            Err(e) => warn!("embedding cache {}: {e}; continuing in memory", path.display()),
        }
        EmbeddingCache {
            inner: Mutex::new(inner),
        }
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, model: &str, text: &str) -> Option<Vec<f64>> {
        let key = (model.to_string(), sha256_hex(text.as_bytes()));
        self.inner.lock().unwrap().vectors.get(&key).cloned()
    }

    pub fn insert(&self, model: &str, text: &str, vector: Vec<f64>) -> Result<()> {
        let mut inner = self.inner.lock().unwrap();
        if let Some(&dim) = inner.dims.get(model) {
            if dim != vector.len() {
                return Err(Error::DimensionMismatch {
                    cached: dim,
                    live: vector.len(),
                });
            }
        }
        inner.dims.insert(model.to_string(), vector.len());
        let hash = sha256_hex(text.as_bytes());
        if let Some(f) = inner.file.as_mut() {
            let line = EmbeddingLine {
                model: model.to_string(),
                text_sha256: hash.clone(),
                vector: vector.clone(),
            };
            let mut buf = serde_json::to_vec(&line)?;
            buf.push(b'\n');
            if let Err(e) = f.write_all(&buf) {
                warn!("embedding cache write failed: {e}; continuing in memory");
                inner.file = None;
            }
        }
        inner.vectors.insert((model.to_string(), hash), vector);
        Ok(())
    }
}

/// Cosine similarity over embeddings from a `/embeddings` endpoint.
pub struct EmbeddingBackend {
    cfg: EmbeddingConfig,
    http: ureq::Agent,
    cache: EmbeddingCache,
    requests: AtomicUsize,
}

impl EmbeddingBackend {
    pub fn new(cfg: EmbeddingConfig) -> Self {
        let cache = match &cfg.cache_path {
            Some(p) => EmbeddingCache::open(p),
            None => EmbeddingCache::in_memory(),
        };
        let http: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.request_timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        EmbeddingBackend {
            cfg,
            http,
            cache,
            requests: AtomicUsize::new(0),
        }
    }

    pub fn cache(&self) -> &EmbeddingCache {
        &self.cache
    }

    fn fetch(&self, inputs: &[&str]) -> Result<Vec<Vec<f64>>> {
        let url = format!("{}/embeddings", self.cfg.base_url.trim_end_matches('/'));
        let key = match &self.cfg.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                Error::EmbeddingUnavailable(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let body = json!({"model": self.cfg.model, "input": inputs});
        let mut last_err = String::new();
        for attempt in 0..=self.cfg.max_retries {
            if attempt > 0 {
                let backoff = self.cfg.retry_backoff_ms << (attempt - 1).min(6);
                thread::sleep(Duration::from_millis(backoff));
            }
            self.requests.fetch_add(1, Ordering::Relaxed);
            let mut req = self.http.post(&url);
            if let Some(k) = &key {
                req = req.header("Authorization", format!("Bearer {k}"));
            }
            match req.send_json(&body) {
                Ok(mut resp) if resp.status().as_u16() == 200 => {
                    let v: Value = resp
                        .body_mut()
                        .read_json()
                        .map_err(|e| Error::EmbeddingUnavailable(e.to_string()))?;
                    return parse_embeddings(&v, inputs.len());
                }
                Ok(resp) => {
                    let status = resp.status().as_u16();
                    last_err = format!("HTTP {status}");
                    if status != 429 && status < 500 {
                        break;
                    }
                }
                Err(e) => last_err = e.to_string(),
            }
            warn!("embedding request to {url} failed (attempt {}): {last_err}", attempt + 1);
        }
        Err(Error::EmbeddingUnavailable(last_err))
    }

    /// Cached or freshly fetched vectors for `texts`, in order.
    pub fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        let model = &self.cfg.model;
        let mut out: Vec<Option<Vec<f64>>> = texts.iter().map(|t| self.cache.get(model, t)).collect();
        let mut missing: Vec<&str> = Vec::new();
        for (t, v) in texts.iter().zip(&out) {
            if v.is_none() && !missing.contains(t) {
                missing.push(t);
            }
        }
        if !missing.is_empty() {
            let fetched = self.fetch(&missing)?;
            for (t, v) in missing.iter().zip(fetched) {
                self.cache.insert(model, t, v)?;
            }
            for (slot, t) in out.iter_mut().zip(texts) {
                if slot.is_none() {
                    *slot = self.cache.get(model, t);
                }
            }
        }
        Ok(out.into_iter().map(|v| v.expect("filled above")).collect())
    }
}

fn parse_embeddings(v: &Value, expected: usize) -> Result<Vec<Vec<f64>>> {
    let data = v
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::EmbeddingUnavailable("response has no data array".into()))?;
    let mut items: Vec<(usize, Vec<f64>)> = Vec::with_capacity(data.len());
    for (pos, item) in data.iter().enumerate() {
        let index = item
            .get("index")
            .and_then(Value::as_u64)
            .map(|i| i as usize)
            .unwrap_or(pos);
        let vector = item
            .get("embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::EmbeddingUnavailable("item has no embedding".into()))?
            .iter()
            .map(|x| {
                x.as_f64()
                    .ok_or_else(|| Error::EmbeddingUnavailable("non-numeric embedding".into()))
            })
            .collect::<Result<Vec<f64>>>()?;
        items.push((index, vector));
    }
    items.sort_by_key(|(i, _)| *i);
    if items.len() != expected {
        return Err(Error::EmbeddingUnavailable(format!(
            "expected {expected} embeddings, got {}",
            items.len()
        )));
    }
    Ok(items.into_iter().map(|(_, v)| v).collect())
}

/// Cosine of the embeddings of `a` and `b`. Identical texts score exactly 1
/// without a lookup.
pub fn embedding_cosine(a: &str, b: &str, backend: &EmbeddingBackend) -> Result<f64> {
    if a == b {
        return Ok(1.0);
    }
    let v = backend.embed(&[a, b])?;
    cosine(&v[0], &v[1])
}

impl SimilarityBackend for EmbeddingBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::EmbeddingCosine
    }

    fn model_tag(&self) -> Option<&str> {
        Some(&self.cfg.model)
    }

    fn similarity(&self, a: &str, b: &str) -> Result<f64> {
        embedding_cosine(a, b, self)
    }

    fn request_count(&self) -> usize {
        self.requests.load(Ordering::Relaxed)
    }
}

/// v(S): similarity of a coalition's response to the baseline. Not clamped.
pub fn coalition_value(
    response: &AgentResponse,
    baseline: &AgentResponse,
    backend: &dyn SimilarityBackend,
) -> Result<f64> {
    backend.similarity(&response.text, &baseline.text)
}
