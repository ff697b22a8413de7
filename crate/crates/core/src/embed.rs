//! Pluggable embedding layer turning rationale text into fixed-dimension
//! vectors, with a content-addressed on-disk cache.
//!
//! Three providers share one contract: `fallback` is a deterministic
//! feature-hashed embedder so the whole pipeline runs hermetically offline;
//! `http` speaks a minimal JSON shape (`{"model", "input": [..]}` ->
//! `{"embeddings": [[..]]}`); `file` serves purely from an existing store
//! and errors on misses. Store keys are content hashes of the exact string
//! embedded, so changing preprocessing invalidates the cache automatically.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ioutil::{atomic_write, sha256_hex};
use crate::textprep::{preprocess, PrepConfig};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("vector has non-finite component")]
    NonFinite,
    #[error("embedding dimension {got} does not match store/config dimension {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("fallback embedder requires dim >= 8, got {0}")]
    DimTooSmall(usize),
    #[error("cannot embed text with no tokens")]
    NoTokens,
    #[error("signed term frequencies cancelled to a zero vector")]
    ZeroNorm,
    #[error("empty string cannot be embedded")]
    EmptyText,
    #[error("embedding store file {path} is corrupt at line {line}: {message}")]
    CorruptStore {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("failed to read/write store {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("provider config invalid: {0}")]
    InvalidConfig(String),
    #[error("credential environment variable {0} is not set")]
    MissingCredential(String),
    #[error("embedding missing from store for key {key} (text starts {preview:?})")]
    MissingEmbedding { key: String, preview: String },
    #[error("provider unreachable after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("provider response invalid: {0}")]
    BadResponse(String),
}

/// Fixed-dimension real vector; all components finite.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EmbedError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Store key: SHA-256 hex of the exact string that was embedded.
pub fn content_key(text: &str) -> String {
    sha256_hex(text.as_bytes())
}

/// Which text form gets embedded for a rationale.
#[derive(Debug, Clone, Copy)]
pub enum EmbedTextMode<'a> {
    /// Embed the raw rationale string.
    Raw,
    /// Embed the preprocessed rationale (the default pipeline choice).
    Preprocessed(&'a PrepConfig),
}

impl EmbedTextMode<'_> {
    /// The exact string submitted to the provider for `raw` rationale text.
    pub fn embedded_text(&self, raw: &str) -> String {
        match self {
            EmbedTextMode::Raw => raw.to_string(),
            EmbedTextMode::Preprocessed(cfg) => preprocess(raw, cfg).into_string(),
        }
    }

    pub fn describe(&self) -> &'static str {
        match self {
            EmbedTextMode::Raw => "raw",
            EmbedTextMode::Preprocessed(_) => "preprocessed",
        }
    }
}

// Values are quantized to 9 significant decimal digits on insertion so the
// in-memory store and its on-disk decimal form are bit-identical, and a
// fresh computation matches a cache reload exactly.
fn quantize(x: f64) -> f64 {
    format!("{x:.8e}").parse().expect("formatted float parses")
}

#[derive(Serialize, Deserialize)]
struct StoreRecord {
    key: String,
    dim: usize,
    values: Vec<f64>,
}

/// Content-addressed map from embedded-text key to vector, uniform `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    entries: BTreeMap<String, EmbeddingVector>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Insert under an explicit key, enforcing the uniform dimension.
    pub fn insert_key(&mut self, key: String, vector: EmbeddingVector) -> Result<(), EmbedError> {
        if vector.dim() != self.dim {
            return Err(EmbedError::DimMismatch {
                expected: self.dim,
                got: vector.dim(),
            });
        }
        let quantized: Vec<f64> = vector.values.iter().map(|&v| quantize(v)).collect();
        self.entries.insert(key, EmbeddingVector { values: quantized });
        Ok(())
    }

    pub fn insert_text(&mut self, text: &str, vector: EmbeddingVector) -> Result<(), EmbedError> {
        self.insert_key(content_key(text), vector)
    }

    pub fn get_key(&self, key: &str) -> Option<&EmbeddingVector> {
        self.entries.get(key)
    }

    pub fn get_text(&self, text: &str) -> Option<&EmbeddingVector> {
        self.get_key(&content_key(text))
    }

    pub fn contains_text(&self, text: &str) -> bool {
        self.entries.contains_key(&content_key(text))
    }

    /// Load a store; every record must carry the expected dimension.
    pub fn load(path: &Path, dim: usize) -> Result<Self, EmbedError> {
        let content = std::fs::read_to_string(path).map_err(|source| EmbedError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut store = Self::new(dim);
        for (idx, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: StoreRecord =
                serde_json::from_str(line).map_err(|e| EmbedError::CorruptStore {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    message: e.to_string(),
                })?;
            if record.dim != dim || record.values.len() != record.dim {
                return Err(EmbedError::CorruptStore {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    message: format!(
                        "record dim {} (values {}) does not match store dim {dim}",
                        record.dim,
                        record.values.len()
                    ),
                });
            }
            store.insert_key(record.key, EmbeddingVector::new(record.values)?)?;
        }
        Ok(store)
    }

    /// Write the store as one JSON record per line, sorted by key.
    pub fn save(&self, path: &Path) -> Result<(), EmbedError> {
        let mut out = String::new();
        for (key, vector) in &self.entries {
            let record = StoreRecord {
                key: key.clone(),
                dim: self.dim,
                values: vector.values.clone(),
            };
            out.push_str(&serde_json::to_string(&record).expect("record serializes"));
            out.push('\n');
        }
        atomic_write(path, out.as_bytes()).map_err(|source| EmbedError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;
// Distinct seeds decorrelate the bucket hash from the sign hash.
const BUCKET_SEED: u64 = 0x9e3779b97f4a7c15;
const SIGN_SEED: u64 = 0xc2b2ae3d27d4eb4f;

fn fnv1a64(bytes: &[u8], seed: u64) -> u64 {
    let mut hash = FNV_OFFSET ^ seed;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Deterministic feature-hashed term-frequency embedding.
///
/// Whitespace tokens are bucketed by a fixed seeded hash with a second hash
/// choosing the sign, then the vector is L2-normalized. Bit-reproducible
/// across runs and platforms; exists so every analysis and golden test runs
/// offline.
pub fn fallback_embed(text: &str, dim: usize) -> Result<EmbeddingVector, EmbedError> {
    if dim < 8 {
        return Err(EmbedError::DimTooSmall(dim));
    }
    let mut acc = vec![0.0f64; dim];
    let mut tokens = 0usize;
    for token in text.split_whitespace() {
        tokens += 1;
        let bucket = (fnv1a64(token.as_bytes(), BUCKET_SEED) % dim as u64) as usize;
        let sign = if fnv1a64(token.as_bytes(), SIGN_SEED) & 1 == 0 {
            1.0
        } else {
            -1.0
        };
        acc[bucket] += sign;
    }
    if tokens == 0 {
        return Err(EmbedError::NoTokens);
    }
    let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(EmbedError::ZeroNorm);
    }
    for v in &mut acc {
        *v /= norm;
    }
    EmbeddingVector::new(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    /// Serve only from the existing store; error on any miss.
    File,
    /// Remote JSON endpoint.
    Http,
    /// Deterministic offline embedder.
    Fallback,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingProviderConfig {
    pub kind: ProviderKind,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
    #[serde(default = "default_max_parallel")]
    pub max_parallel: usize,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// Name of the environment variable holding the API key; never logged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
}

fn default_max_parallel() -> usize {
    4
}

fn default_max_retries() -> u32 {
    3
}

impl EmbeddingProviderConfig {
    pub fn fallback(dim: usize) -> Self {
        Self {
            kind: ProviderKind::Fallback,
            dim,
            endpoint: None,
            model_name: None,
            max_parallel: default_max_parallel(),
            max_retries: default_max_retries(),
            api_key_env: None,
        }
    }

    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dim == 0 {
            return Err(EmbedError::InvalidConfig("dim must be positive".into()));
        }
        if self.max_parallel == 0 {
            return Err(EmbedError::InvalidConfig(
                "max_parallel must be positive".into(),
            ));
        }
        if matches!(self.kind, ProviderKind::Http) && self.endpoint.is_none() {
            return Err(EmbedError::InvalidConfig(
                "http provider requires an endpoint".into(),
            ));
        }
        Ok(())
    }
}

/// What a batch did: lets callers verify cache coherence.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct BatchReport {
    /// Distinct texts requested.
    pub requested: usize,
    /// Served from the store without provider involvement.
    pub cached: usize,
    /// Newly fetched/computed and inserted.
    pub fetched: usize,
    /// Provider round trips performed (0 on a fully warm cache).
    pub provider_requests: usize,
}

/// Abstraction over the remote side of `embed_batch`, one request per call.
pub trait EmbeddingBackend: Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError>;
}

#[derive(Serialize)]
struct HttpEmbedRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct HttpEmbedResponse {
    embeddings: Vec<Vec<f64>>,
}

/// Backend speaking the minimal JSON embedding shape over HTTP.
pub struct HttpEmbeddingBackend {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    max_retries: u32,
    client: reqwest::blocking::Client,
}

impl HttpEmbeddingBackend {
    pub fn from_config(config: &EmbeddingProviderConfig) -> Result<Self, EmbedError> {
        config.validate()?;
        let endpoint = config
            .endpoint
            .clone()
            .ok_or_else(|| EmbedError::InvalidConfig("http provider requires an endpoint".into()))?;
        let api_key = match &config.api_key_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| EmbedError::MissingCredential(var.clone()))?,
            ),
            None => None,
        };
        Ok(Self {
            endpoint,
            model: config.model_name.clone().unwrap_or_default(),
            api_key,
            max_retries: config.max_retries,
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(60))
                .build()
                .map_err(|e| EmbedError::InvalidConfig(e.to_string()))?,
        })
    }

    fn attempt(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let mut req = self.client.post(&self.endpoint).json(&HttpEmbedRequest {
            model: &self.model,
            input: texts,
        });
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let response = req.send().map_err(|e| EmbedError::Transport {
            attempts: 1,
            message: e.to_string(),
        })?;
        if !response.status().is_success() {
            return Err(EmbedError::Transport {
                attempts: 1,
                message: format!("status {}", response.status()),
            });
        }
        let body: HttpEmbedResponse = response
            .json()
            .map_err(|e| EmbedError::BadResponse(e.to_string()))?;
        if body.embeddings.len() != texts.len() {
            return Err(EmbedError::BadResponse(format!(
                "{} embeddings returned for {} inputs",
                body.embeddings.len(),
                texts.len()
            )));
        }
        Ok(body.embeddings)
    }
}

/// Exponential backoff schedule starting at 500 ms.
pub fn backoff_delay(attempt: u32) -> Duration {
    Duration::from_millis(500u64.saturating_mul(1u64 << attempt.min(6)))
}

impl EmbeddingBackend for HttpEmbeddingBackend {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let mut last = None;
        for attempt in 0..=self.max_retries {
            match self.attempt(texts) {
                Ok(vectors) => return Ok(vectors),
                Err(EmbedError::Transport { message, .. }) => {
                    last = Some(message);
                    if attempt < self.max_retries {
                        std::thread::sleep(backoff_delay(attempt));
                    }
                }
                Err(other) => return Err(other),
            }
        }
        Err(EmbedError::Transport {
            attempts: self.max_retries + 1,
            message: last.unwrap_or_default(),
        })
    }
}

struct FallbackBackend {
    dim: usize,
}

impl EmbeddingBackend for FallbackBackend {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        texts
            .iter()
            .map(|t| fallback_embed(t, self.dim).map(|v| v.values))
            .collect()
    }
}

// Texts per provider round trip.
const BATCH_CHUNK: usize = 32;

/// Ensure the store holds a vector for every input text.
///
/// Texts already cached are not re-fetched; duplicate inputs collapse to one
/// entry via the content hash. Provider requests run on up to
/// `max_parallel` threads; insertions happen on the calling thread after
/// all workers finish, so readers always see a consistent snapshot.
pub fn embed_batch(
    texts: &[String],
    provider: &EmbeddingProviderConfig,
    store: &mut EmbeddingStore,
) -> Result<BatchReport, EmbedError> {
    provider.validate()?;
    if provider.dim != store.dim() {
        return Err(EmbedError::DimMismatch {
            expected: store.dim(),
            got: provider.dim,
        });
    }
    if texts.iter().any(|t| t.is_empty()) {
        return Err(EmbedError::EmptyText);
    }
    let mut missing: BTreeMap<String, String> = BTreeMap::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for text in texts {
        let key = content_key(text);
        if seen.insert(key.clone()) && store.get_key(&key).is_none() {
            missing.insert(key, text.clone());
        }
    }
    let mut report = BatchReport {
        requested: seen.len(),
        cached: seen.len() - missing.len(),
        fetched: 0,
        provider_requests: 0,
    };
    if missing.is_empty() {
        return Ok(report);
    }

    let backend: Box<dyn EmbeddingBackend> = match provider.kind {
        ProviderKind::Fallback => Box::new(FallbackBackend { dim: provider.dim }),
        ProviderKind::Http => Box::new(HttpEmbeddingBackend::from_config(provider)?),
        ProviderKind::File => {
            let (key, text) = missing.iter().next().expect("missing is non-empty");
            return Err(EmbedError::MissingEmbedding {
                key: key.clone(),
                preview: text.chars().take(32).collect(),
            });
        }
    };
    let (fetched, requests) =
        run_backend(backend.as_ref(), &missing, provider.max_parallel, provider.dim)?;
    report.provider_requests = requests;
    for (key, values) in fetched {
        store.insert_key(key, EmbeddingVector::new(values)?)?;
        report.fetched += 1;
    }
    Ok(report)
}

type Fetched = Vec<(String, Vec<f64>)>;

fn run_backend(
    backend: &dyn EmbeddingBackend,
    missing: &BTreeMap<String, String>,
    max_parallel: usize,
    dim: usize,
) -> Result<(Fetched, usize), EmbedError> {
    let items: Vec<(&String, &String)> = missing.iter().collect();
    let chunks: Vec<&[(&String, &String)]> = items.chunks(BATCH_CHUNK).collect();
    let next = Mutex::new(0usize);
    let results: Mutex<Vec<Result<Fetched, EmbedError>>> = Mutex::new(Vec::new());
    let requests = Mutex::new(0usize);

    std::thread::scope(|scope| {
        for _ in 0..max_parallel.min(chunks.len()).max(1) {
            scope.spawn(|| loop {
                let idx = {
                    let mut guard = next.lock().expect("queue lock");
                    if *guard >= chunks.len() {
                        return;
                    }
                    let idx = *guard;
                    *guard += 1;
                    idx
                };
                let chunk = chunks[idx];
                let texts: Vec<String> = chunk.iter().map(|(_, t)| (*t).clone()).collect();
                *requests.lock().expect("request counter") += 1;
                let outcome = backend.embed(&texts).and_then(|vectors| {
                    let mut out = Vec::with_capacity(vectors.len());
                    for ((key, _), values) in chunk.iter().zip(vectors) {
                        if values.len() != dim {
                            return Err(EmbedError::DimMismatch {
                                expected: dim,
                                got: values.len(),
                            });
                        }
                        out.push(((*key).clone(), values));
                    }
                    Ok(out)
                });
                results.lock().expect("results lock").push(outcome);
            });
        }
    });

    let mut fetched = Vec::with_capacity(missing.len());
    for outcome in results.into_inner().expect("results lock") {
        fetched.extend(outcome?);
    }
    // Deterministic insertion order regardless of worker scheduling.
    fetched.sort_by(|a, b| a.0.cmp(&b.0));
    Ok((fetched, requests.into_inner().expect("request counter")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fallback_is_deterministic_bitwise() {
        let a = fallback_embed("the quick brown fox", 64).unwrap();
        let b = fallback_embed("the quick brown fox", 64).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn fallback_is_unit_norm() {
        for text in ["one", "alpha beta gamma", "a b c d e f g h i j k"] {
            let v = fallback_embed(text, 256).unwrap();
            assert!((v.l2_norm() - 1.0).abs() < 1e-9, "norm off for {text:?}");
        }
    }

    #[test]
    fn fallback_rejects_degenerate_inputs() {
        assert!(matches!(fallback_embed("hi", 4), Err(EmbedError::DimTooSmall(4))));
        assert!(matches!(fallback_embed("   ", 64), Err(EmbedError::NoTokens)));
    }

    #[test]
    fn disjoint_vocabulary_is_near_orthogonal() {
        // Independent re-derivation: recompute the signed bucket counts for
        // both fixture texts and form the exact expected cosine, then check
        // it matches the implementation and sits below the 0.3 bound.
        let ta = "maple birch cedar willow aspen";
        let tb = "quartz basalt granite shale marble";
        let dim = 256usize;
        let mut ca = vec![0.0f64; dim];
        let mut cb = vec![0.0f64; dim];
        for (text, acc) in [(ta, &mut ca), (tb, &mut cb)] {
            for token in text.split_whitespace() {
                let mut h = FNV_OFFSET ^ BUCKET_SEED;
                for &byte in token.as_bytes() {
                    h ^= byte as u64;
                    h = h.wrapping_mul(FNV_PRIME);
                }
                let bucket = (h % dim as u64) as usize;
                let mut s = FNV_OFFSET ^ SIGN_SEED;
                for &byte in token.as_bytes() {
                    s ^= byte as u64;
                    s = s.wrapping_mul(FNV_PRIME);
                }
                acc[bucket] += if s & 1 == 0 { 1.0 } else { -1.0 };
            }
        }
        let dot: f64 = ca.iter().zip(&cb).map(|(a, b)| a * b).sum();
        let na = ca.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nb = cb.iter().map(|v| v * v).sum::<f64>().sqrt();
        let expected = dot / (na * nb);

        let va = fallback_embed(ta, dim).unwrap();
        let vb = fallback_embed(tb, dim).unwrap();
        let got: f64 = va
            .values()
            .iter()
            .zip(vb.values())
            .map(|(a, b)| a * b)
            .sum();
        assert!((got - expected).abs() < 1e-12);
        assert!(got.abs() < 0.3, "cosine {got} not near 0");
    }

    #[test]
    fn store_rejects_dim_mismatch() {
        let mut store = EmbeddingStore::new(8);
        let v = EmbeddingVector::new(vec![1.0; 16]).unwrap();
        assert!(matches!(
            store.insert_text("x", v),
            Err(EmbedError::DimMismatch { expected: 8, got: 16 })
        ));
    }

    #[test]
    fn store_round_trips_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        let mut store = EmbeddingStore::new(16);
        for text in ["alpha beta", "gamma delta", "epsilon"] {
            store
                .insert_text(text, fallback_embed(text, 16).unwrap())
                .unwrap();
        }
        store.save(&path).unwrap();
        let loaded = EmbeddingStore::load(&path, 16).unwrap();
        assert_eq!(store, loaded);
        loaded.save(&path).unwrap();
        let reloaded = EmbeddingStore::load(&path, 16).unwrap();
        assert_eq!(loaded, reloaded);
    }

    #[test]
    fn store_load_rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        std::fs::write(&path, "{\"key\":\"k\",\"dim\":4,\"values\":[1.0]}\n").unwrap();
        assert!(matches!(
            EmbeddingStore::load(&path, 4),
            Err(EmbedError::CorruptStore { line: 1, .. })
        ));
    }

    #[test]
    fn embed_batch_counts_and_dedup() {
        let mut store = EmbeddingStore::new(256);
        let provider = EmbeddingProviderConfig::fallback(256);
        let texts = vec![
            "first text".to_string(),
            "second text".to_string(),
            "first text".to_string(),
        ];
        let report = embed_batch(&texts, &provider, &mut store).unwrap();
        assert_eq!(report.requested, 2);
        assert_eq!(report.fetched, 2);
        assert_eq!(store.len(), 2);
        assert_eq!(store.get_text("first text").unwrap().dim(), 256);
    }

    #[test]
    fn embed_batch_second_call_hits_cache() {
        struct Counting {
            calls: Mutex<usize>,
        }
        impl EmbeddingBackend for Counting {
            fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
                *self.calls.lock().unwrap() += 1;
                Ok(texts.iter().map(|_| vec![1.0; 8]).collect())
            }
        }
        let backend = Counting {
            calls: Mutex::new(0),
        };
        let mut missing = BTreeMap::new();
        missing.insert(content_key("a"), "a".to_string());
        missing.insert(content_key("b"), "b".to_string());
        let (fetched, requests) = run_backend(&backend, &missing, 2, 8).unwrap();
        assert_eq!(fetched.len(), 2);
        assert_eq!(requests, 1);

        // Warm-cache path: nothing missing means the backend is never built.
        let mut store = EmbeddingStore::new(256);
        let provider = EmbeddingProviderConfig::fallback(256);
        let texts = vec!["x y z".to_string()];
        embed_batch(&texts, &provider, &mut store).unwrap();
        let second = embed_batch(&texts, &provider, &mut store).unwrap();
        assert_eq!(second.provider_requests, 0);
        assert_eq!(second.cached, 1);
    }

    #[test]
    fn embed_batch_results_are_batch_order_independent() {
        let provider = EmbeddingProviderConfig::fallback(64);
        let forward = vec!["one two".to_string(), "three four".to_string(), "five".to_string()];
        let mut reversed = forward.clone();
        reversed.reverse();
        let mut store_a = EmbeddingStore::new(64);
        let mut store_b = EmbeddingStore::new(64);
        embed_batch(&forward, &provider, &mut store_a).unwrap();
        embed_batch(&reversed, &provider, &mut store_b).unwrap();
        assert_eq!(store_a, store_b);
    }

    #[test]
    fn embed_batch_rejects_empty_text() {
        let mut store = EmbeddingStore::new(256);
        let provider = EmbeddingProviderConfig::fallback(256);
        assert!(matches!(
            embed_batch(&[String::new()], &provider, &mut store),
            Err(EmbedError::EmptyText)
        ));
    }

    #[test]
    fn file_provider_errors_on_miss() {
        let mut store = EmbeddingStore::new(256);
        let provider = EmbeddingProviderConfig {
            kind: ProviderKind::File,
            ..EmbeddingProviderConfig::fallback(256)
        };
        let err = embed_batch(&["novel text".to_string()], &provider, &mut store).unwrap_err();
        assert!(matches!(err, EmbedError::MissingEmbedding { .. }));
    }

    #[test]
    fn http_config_requires_endpoint() {
        let provider = EmbeddingProviderConfig {
            kind: ProviderKind::Http,
            ..EmbeddingProviderConfig::fallback(256)
        };
        assert!(matches!(
            provider.validate(),
            Err(EmbedError::InvalidConfig(_))
        ));
    }

    #[test]
    fn http_backend_fails_fast_on_missing_credential() {
        let provider = EmbeddingProviderConfig {
            kind: ProviderKind::Http,
            endpoint: Some("http://127.0.0.1:1/".into()),
            api_key_env: Some("RATERLENS_EMBED_TEST_NO_SUCH_KEY".into()),
            ..EmbeddingProviderConfig::fallback(256)
        };
        match HttpEmbeddingBackend::from_config(&provider) {
            Err(EmbedError::MissingCredential(var)) => {
                assert_eq!(var, "RATERLENS_EMBED_TEST_NO_SUCH_KEY");
            }
            Err(other) => panic!("wrong error: {other}"),
            Ok(_) => panic!("backend built without its credential"),
        }
    }

    #[test]
    fn backend_dim_mismatch_detected() {
        struct Wrong;
        impl EmbeddingBackend for Wrong {
            fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
                Ok(texts.iter().map(|_| vec![0.5; 384]).collect())
            }
        }
        let mut missing = BTreeMap::new();
        missing.insert(content_key("a"), "a".to_string());
        let err = run_backend(&Wrong, &missing, 1, 256).unwrap_err();
        assert!(matches!(
            err,
            EmbedError::DimMismatch { expected: 256, got: 384 }
        ));
    }

    #[test]
    fn quantize_is_stable() {
        let v = std::f64::consts::FRAC_1_PI;
        let q = quantize(v);
        assert_eq!(quantize(q), q);
        assert!((q - v).abs() < 1e-9);
    }
}
