//! Embedding providers: an offline hashed tf-idf embedder, an
//! OpenAI-compatible HTTP client, and a digest-keyed cache.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::RwLock;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dialogue::tokenize;
use crate::llm::{write_atomic, RetryPolicy};
use crate::similarity::EmbeddingVector;

#[derive(Debug, Error, PartialEq)]
pub enum EmbedError {
    #[error("embedding transport error: {0}")]
    Transport(String),
    #[error("embedding response invalid: {0}")]
    InvalidResponse(String),
    #[error("provider `{provider}` returned dimension {got}, expected {expected}")]
    Dimension {
        provider: String,
        expected: usize,
        got: usize,
    },
    #[error("embedding cache I/O: {0}")]
    Cache(String),
}

/// Maps text to fixed-dimension vectors. Implementations must be
/// deterministic for a given `name()` and text.
pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

/// FNV-1a, 64 bit.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

pub fn hash_bucket(token: &str, dim: usize) -> usize {
    (fnv1a(token.as_bytes()) % dim as u64) as usize
}

/// Smoothed inverse document frequencies: `ln((1 + N) / (1 + df)) + 1`.
/// Unseen tokens get the weight of a document frequency of zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Idf {
    documents: usize,
    weights: BTreeMap<String, f64>,
}

impl Idf {
    pub fn fit<'a, I>(documents: I) -> Self
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        let mut count = 0usize;
        for doc in documents {
            count += 1;
            let mut seen: Vec<&String> = doc.iter().collect();
            seen.sort();
            seen.dedup();
            for t in seen {
                *df.entry(t.clone()).or_default() += 1;
            }
        }
        let weights = df
            .into_iter()
            .map(|(t, d)| (t, Self::formula(count, d)))
            .collect();
        Self {
            documents: count,
            weights,
        }
    }

    /// Every token weighted 1.
    pub fn uniform() -> Self {
        Self {
            documents: 0,
            weights: BTreeMap::new(),
        }
    }

    fn formula(documents: usize, df: usize) -> f64 {
        ((1.0 + documents as f64) / (1.0 + df as f64)).ln() + 1.0
    }

    pub fn weight(&self, token: &str) -> f64 {
        self.weights
            .get(token)
            .copied()
            .unwrap_or_else(|| Self::formula(self.documents, 0))
    }

    /// Short digest identifying this table, used in provider names.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.documents.to_le_bytes());
        for (t, w) in &self.weights {
            h.update(t.as_bytes());
            h.update([0]);
            h.update(w.to_bits().to_le_bytes());
        }
        hex::encode(&h.finalize()[..4])
    }
}

/// Hashes each token into `[0, dim)`, accumulates tf·idf and L2-normalizes.
/// Empty input yields the zero vector.
pub fn hashed_tfidf_embed(tokens: &[String], idf: &Idf, dim: usize) -> EmbeddingVector {
    assert!(dim >= 16, "hashed embedding dimension must be at least 16");
    let mut values = vec![0.0f64; dim];
    for t in tokens {
        values[hash_bucket(t, dim)] += idf.weight(t);
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        values.iter_mut().for_each(|v| *v /= norm);
    }
    EmbeddingVector::new(values).expect("finite by construction")
}

#[derive(Debug, Clone)]
pub struct HashedTfidfProvider {
    name: String,
    idf: Idf,
    dim: usize,
}

impl HashedTfidfProvider {
    pub const DEFAULT_DIM: usize = 256;

    pub fn new(idf: Idf, dim: usize) -> Self {
        assert!(dim >= 16, "hashed embedding dimension must be at least 16");
        let name = format!("hashed-tfidf-{dim}-{}", idf.fingerprint());
        Self { name, idf, dim }
    }

    /// Fits idf over every utterance of the given dialogues.
    pub fn fit<'a, I>(dialogues: I, dim: usize) -> Self
    where
        I: IntoIterator<Item = &'a crate::dialogue::Dialogue>,
    {
        let docs: Vec<&[String]> = dialogues
            .into_iter()
            .flat_map(|d| d.utterances.iter().map(|u| u.tokens.as_slice()))
            .collect();
        Self::new(Idf::fit(docs), dim)
    }

    pub fn idf(&self) -> &Idf {
        &self.idf
    }
}

impl EmbeddingProvider for HashedTfidfProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        Ok(hashed_tfidf_embed(&tokenize(text), &self.idf, self.dim))
    }
}

/// Client for an OpenAI-compatible `/v1/embeddings` endpoint.
pub struct HttpEmbeddingProvider {
    name: String,
    base_url: String,
    model: String,
    api_key: Option<String>,
    dim: usize,
    retry: RetryPolicy,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f64>,
}

impl HttpEmbeddingProvider {
    pub fn new(
        base_url: impl Into<String>,
        model: impl Into<String>,
        dim: usize,
        api_key: Option<String>,
    ) -> Self {
        let model = model.into();
        Self {
            name: format!("http-{model}"),
            base_url: base_url.into(),
            model,
            api_key,
            dim,
            retry: RetryPolicy::default(),
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .expect("http client"),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn endpoint(&self) -> String {
        format!("{}/v1/embeddings", self.base_url.trim_end_matches('/'))
    }

    fn request(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let body = serde_json::json!({"model": self.model, "input": texts});
        let text = self
            .retry
            .run(|| {
                let mut req = self.client.post(self.endpoint()).json(&body);
                if let Some(key) = &self.api_key {
                    req = req.bearer_auth(key);
                }
                req.send()
            })
            .map_err(EmbedError::Transport)?;
        let parsed: EmbeddingResponse = serde_json::from_str(&text)
            .map_err(|e| EmbedError::InvalidResponse(e.to_string()))?;
        if parsed.data.len() != texts.len() {
            return Err(EmbedError::InvalidResponse(format!(
                "{} embeddings for {} inputs",
                parsed.data.len(),
                texts.len()
            )));
        }
        let mut slots: Vec<Option<EmbeddingVector>> = vec![None; texts.len()];
        for (pos, datum) in parsed.data.into_iter().enumerate() {
            let index = datum.index.unwrap_or(pos);
            if index >= slots.len() {
                return Err(EmbedError::InvalidResponse(format!("index {index} out of range")));
            }
            if datum.embedding.len() != self.dim {
                return Err(EmbedError::Dimension {
                    provider: self.name.clone(),
                    expected: self.dim,
                    got: datum.embedding.len(),
                });
            }
            slots[index] = Some(
                EmbeddingVector::new(datum.embedding)
                    .map_err(|e| EmbedError::InvalidResponse(e.to_string()))?,
            );
        }
        slots
            .into_iter()
            .enumerate()
            .map(|(i, s)| s.ok_or_else(|| EmbedError::InvalidResponse(format!("missing index {i}"))))
            .collect()
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        Ok(self.request(&[text])?.remove(0))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        self.request(texts)
    }
}

pub fn text_digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    provider: String,
    dim: usize,
    entries: BTreeMap<String, EmbeddingVector>,
}

/// Wraps a provider with an in-memory cache keyed by text digest, optionally
/// persisted to a JSON file. Readers share the lock; inserts serialize.
pub struct CachedProvider<P> {
    inner: P,
    entries: RwLock<HashMap<String, EmbeddingVector>>,
    path: Option<PathBuf>,
}

impl<P: EmbeddingProvider> CachedProvider<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            entries: RwLock::new(HashMap::new()),
            path: None,
        }
    }

    /// Loads entries from `path` if it exists and was written by the same
    /// provider; a file from a different provider is ignored.
    pub fn persistent(inner: P, path: impl AsRef<Path>) -> Result<Self, EmbedError> {
        let path = path.as_ref().to_path_buf();
        let mut entries = HashMap::new();
        if path.exists() {
            let bytes = std::fs::read(&path).map_err(|e| EmbedError::Cache(e.to_string()))?;
            let file: CacheFile =
                serde_json::from_slice(&bytes).map_err(|e| EmbedError::Cache(e.to_string()))?;
            if file.provider == inner.name() && file.dim == inner.dim() {
                entries.extend(file.entries);
            }
        }
        Ok(Self {
            inner,
            entries: RwLock::new(entries),
            path: Some(path),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn save(&self) -> Result<(), EmbedError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let entries: BTreeMap<String, EmbeddingVector> = self
            .entries
            .read()
            .expect("cache lock")
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let file = CacheFile {
            provider: self.inner.name().to_string(),
            dim: self.inner.dim(),
            entries,
        };
        let bytes = serde_json::to_vec(&file).map_err(|e| EmbedError::Cache(e.to_string()))?;
        write_atomic(path, &bytes).map_err(|e| EmbedError::Cache(e.to_string()))
    }
}

impl<P: EmbeddingProvider> EmbeddingProvider for CachedProvider<P> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        Ok(self.embed_batch(&[text])?.remove(0))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let keys: Vec<String> = texts.iter().map(|t| text_digest(t)).collect();
        let mut out: Vec<Option<EmbeddingVector>> = {
            let entries = self.entries.read().expect("cache lock");
            keys.iter().map(|k| entries.get(k).cloned()).collect()
        };
        let missing: Vec<usize> = (0..texts.len()).filter(|&i| out[i].is_none()).collect();
        if !missing.is_empty() {
            let batch: Vec<&str> = missing.iter().map(|&i| texts[i]).collect();
            let fresh = self.inner.embed_batch(&batch)?;
            let mut entries = self.entries.write().expect("cache lock");
            for (&i, vec) in missing.iter().zip(fresh) {
                if vec.dim() != self.inner.dim() {
                    return Err(EmbedError::Dimension {
                        provider: self.inner.name().to_string(),
                        expected: self.inner.dim(),
                        got: vec.dim(),
                    });
                }
                entries.insert(keys[i].clone(), vec.clone());
                out[i] = Some(vec);
            }
        }
        Ok(out.into_iter().map(|v| v.expect("filled")).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::similarity::cosine;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn empty_tokens_give_zero_vector() {
        let v = hashed_tfidf_embed(&[], &Idf::uniform(), 256);
        assert!(v.is_zero());
        assert_eq!(v.dim(), 256);
    }

    #[test]
    fn identical_tokens_identical_vectors() {
        let idf = Idf::uniform();
        let a = hashed_tfidf_embed(&toks("pilot boarding at buoy"), &idf, 256);
        let b = hashed_tfidf_embed(&toks("pilot boarding at buoy"), &idf, 256);
        assert_eq!(a, b);
        assert!((cosine(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        assert!((a.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_vocabulary_collision_free_is_orthogonal() {
        let left = toks("pilot boarding ladder");
        let right = toks("weather forecast gale");
        let mut buckets: Vec<usize> = left.iter().map(|t| hash_bucket(t, 256)).collect();
        for t in &right {
            let b = hash_bucket(t, 256);
            assert!(!buckets.contains(&b), "test tokens collide under fnv1a");
            buckets.push(b);
        }
        let idf = Idf::uniform();
        let c = cosine(
            &hashed_tfidf_embed(&left, &idf, 256),
            &hashed_tfidf_embed(&right, &idf, 256),
        )
        .unwrap();
        assert_eq!(c, 0.0);
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn idf_downweights_common_tokens() {
        let docs = [toks("over and out"), toks("over to you"), toks("pilot")];
        let idf = Idf::fit(docs.iter().map(|d| d.as_slice()));
        assert!(idf.weight("over") < idf.weight("pilot"));
        assert!(idf.weight("never-seen") > idf.weight("pilot"));
        assert!((idf.weight("pilot") - (4.0f64 / 2.0).ln() - 1.0).abs() < 1e-12);
    }

    struct Counting(AtomicUsize);

    impl EmbeddingProvider for Counting {
        fn name(&self) -> &str {
            "counting"
        }
        fn dim(&self) -> usize {
            16
        }
        fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
            self.0.fetch_add(1, Ordering::SeqCst);
            Ok(hashed_tfidf_embed(&tokenize(text), &Idf::uniform(), 16))
        }
    }

    #[test]
    fn cache_hits_skip_inner_provider_and_persist() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.json");
        let cached = CachedProvider::persistent(Counting(AtomicUsize::new(0)), &path).unwrap();
        let a = cached.embed_batch(&["one two", "three", "one two"]).unwrap();
        assert_eq!(a[0], a[2]);
        assert_eq!(cached.inner.0.load(Ordering::SeqCst), 3);
        cached.embed("three").unwrap();
        assert_eq!(cached.inner.0.load(Ordering::SeqCst), 3);
        cached.save().unwrap();

        let reloaded = CachedProvider::persistent(Counting(AtomicUsize::new(0)), &path).unwrap();
        assert_eq!(reloaded.len(), 2);
        assert_eq!(reloaded.embed("one two").unwrap(), a[0]);
        assert_eq!(reloaded.inner.0.load(Ordering::SeqCst), 0);
    }
}
