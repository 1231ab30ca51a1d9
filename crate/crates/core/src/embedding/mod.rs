//! Embeddings of intents and item fields, and the feature sets derived
//! from (intent, field) embedding pairs.

mod cache;
pub mod distance;
mod features;
mod hashing;
mod openai;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::connectors::RetrievedItem;
use crate::planner::SUPPORTED_DIMS;
use crate::source::sha256_hex;

pub use cache::{CacheKey, EmbeddingCache, CACHE_FORMAT, CACHE_VERSION};
pub use distance::{cosine_distance, euclidean_distance, l1_distance};
pub use features::{build_features, canonical_fields, FeatureSpec, FeatureVector, FieldEmbeddingSet};
pub use hashing::HashingEmbeddings;
pub use openai::OpenAiEmbeddings;

/// Texts longer than this many characters are cut before embedding.
pub const MAX_EMBED_CHARS: usize = 8000;

/// Tolerance on the unit norm of normalized vectors.
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub dims: usize,
    pub model_id: String,
    pub normalized: bool,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>, model_id: impl Into<String>) -> Result<Self, EmbeddingError> {
        if values.is_empty() {
            return Err(EmbeddingError::InvalidInput("empty vector".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::InvalidInput("non-finite vector component".into()));
        }
        Ok(EmbeddingVector {
            dims: values.len(),
            values,
            model_id: model_id.into(),
            normalized: false,
        })
    }

    pub fn norm(&self) -> f64 {
        distance::norm(&self.values)
    }

    /// Copy scaled to unit Euclidean norm.
    pub fn normalize(mut self) -> Result<Self, EmbeddingError> {
        let n = self.norm();
        if n == 0.0 {
            return Err(EmbeddingError::Degenerate(
                "zero-norm vector cannot be normalized".into(),
            ));
        }
        self.values.iter_mut().for_each(|v| *v /= n);
        self.normalized = true;
        Ok(self)
    }

    /// First `dims` entries, renormalized.
    pub fn truncated(&self, dims: usize) -> Result<Self, EmbeddingError> {
        if dims > self.dims || dims == 0 {
            return Err(EmbeddingError::Dimension {
                expected: dims,
                actual: self.dims,
            });
        }
        EmbeddingVector::new(self.values[..dims].to_vec(), self.model_id.clone())?.normalize()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmbeddingError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("embedding provider failed{}: {message}", request_id.as_ref().map(|r| format!(" (request {r})")).unwrap_or_default())]
    Provider {
        message: String,
        request_id: Option<String>,
    },
    #[error("embedding cache: {0}")]
    Cache(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message}")]
pub struct ProviderError {
    pub message: String,
    pub request_id: Option<String>,
}

/// A remote (or fixture) embedding model.
pub trait EmbeddingProvider: Send + Sync {
    /// Raw embedding of `text`. When `dims` is `Some`, the provider was asked
    /// for that dimensionality natively.
    fn embed(&self, text: &str, model_id: &str, dims: Option<usize>) -> Result<Vec<f64>, ProviderError>;

    /// Whether `model_id` can emit a requested dimensionality natively.
    fn supports_dims(&self, model_id: &str) -> bool;
}

/// Embeds texts through a provider, with truncation, renormalization and
/// a (text hash, model, dims) keyed cache.
pub struct Embedder {
    provider: Arc<dyn EmbeddingProvider>,
    cache: Arc<EmbeddingCache>,
    max_chars: usize,
}

impl Embedder {
    pub fn new(provider: Arc<dyn EmbeddingProvider>, cache: Arc<EmbeddingCache>) -> Self {
        Embedder {
            provider,
            cache,
            max_chars: MAX_EMBED_CHARS,
        }
    }

    pub fn uncached(provider: Arc<dyn EmbeddingProvider>) -> Self {
        Self::new(provider, Arc::new(EmbeddingCache::disabled()))
    }

    pub fn cache(&self) -> &EmbeddingCache {
        &self.cache
    }

    pub fn embed_text(&self, text: &str, model_id: &str, dims: usize) -> Result<EmbeddingVector, EmbeddingError> {
        if !SUPPORTED_DIMS.contains(&dims) {
            return Err(EmbeddingError::InvalidInput(format!(
                "unsupported dimensionality {dims}"
            )));
        }
        if text.trim().is_empty() {
            return Err(EmbeddingError::InvalidInput("text is empty".into()));
        }
        let text: String = text.chars().take(self.max_chars).collect();
        let key = CacheKey {
            text_sha256: sha256_hex(&text),
            model_id: model_id.to_string(),
            dims,
        };
        self.cache.get_or_compute(&key, || self.compute(&text, model_id, dims))
    }

    fn compute(&self, text: &str, model_id: &str, dims: usize) -> Result<EmbeddingVector, EmbeddingError> {
        let native = self.provider.supports_dims(model_id);
        let raw = self
            .provider
            .embed(text, model_id, native.then_some(dims))
            .map_err(|e| EmbeddingError::Provider {
                message: e.message,
                request_id: e.request_id,
            })?;
        if raw.len() < dims {
            return Err(EmbeddingError::Dimension {
                expected: dims,
                actual: raw.len(),
            });
        }
        let full = EmbeddingVector::new(raw, model_id)?;
        full.truncated(dims)
    }

    /// Embeds every canonical textual field of `item` that has text.
    pub fn embed_item_fields(
        &self,
        item: &RetrievedItem,
        model_id: &str,
        dims: usize,
    ) -> Result<FieldEmbeddingSet, EmbeddingError> {
        let mut set = FieldEmbeddingSet::new(item.item_id.clone(), item.source, model_id, dims);
        for &field in canonical_fields(item.source) {
            if let Some(text) = item.field_text(field) {
                set.insert(field, self.embed_text(text, model_id, dims)?)?;
            }
        }
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use parking_lot::Mutex;

    /// Returns a fixed 1536-vector and counts calls.
    pub(crate) struct FixedProvider {
        pub values: Vec<f64>,
        pub calls: Mutex<usize>,
    }

    impl EmbeddingProvider for FixedProvider {
        fn embed(&self, _text: &str, _model_id: &str, _dims: Option<usize>) -> Result<Vec<f64>, ProviderError> {
            *self.calls.lock() += 1;
            Ok(self.values.clone())
        }
        fn supports_dims(&self, _model_id: &str) -> bool {
            false
        }
    }

    fn fixed() -> Arc<FixedProvider> {
        Arc::new(FixedProvider {
            values: (0..1536).map(|i| ((i % 7) as f64) - 2.5).collect(),
            calls: Mutex::new(0),
        })
    }

    #[test]
    fn truncates_then_renormalizes() {
        let p = fixed();
        let e = Embedder::uncached(p.clone());
        let v = e.embed_text("hello", "m", 512).unwrap();
        assert_eq!(v.dims, 512);
        assert!(v.normalized);
        let prefix = &p.values[..512];
        let n = prefix.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (got, raw) in v.values.iter().zip(prefix) {
            assert!((got - raw / n).abs() < 1e-12);
        }
        assert!((v.norm() - 1.0).abs() < NORM_TOLERANCE);
    }

    #[test]
    fn repeated_requests_hit_the_cache() {
        let p = fixed();
        let e = Embedder::new(p.clone(), Arc::new(EmbeddingCache::in_memory()));
        let a = e.embed_text("same text", "m", 1024).unwrap();
        let b = e.embed_text("same text", "m", 1024).unwrap();
        assert_eq!(a, b);
        assert_eq!(*p.calls.lock(), 1);
        e.embed_text("same text", "m", 512).unwrap();
        assert_eq!(*p.calls.lock(), 2);
    }

    #[test]
    fn whitespace_text_is_rejected() {
        let e = Embedder::uncached(fixed());
        assert!(matches!(
            e.embed_text(" \t\n", "m", 512),
            Err(EmbeddingError::InvalidInput(_))
        ));
        assert!(matches!(
            e.embed_text("x", "m", 300),
            Err(EmbeddingError::InvalidInput(_))
        ));
    }

    #[test]
    fn long_texts_are_cut_before_embedding() {
        let p = fixed();
        let e = Embedder::new(p.clone(), Arc::new(EmbeddingCache::in_memory()));
        let base = "a".repeat(MAX_EMBED_CHARS);
        e.embed_text(&base, "m", 512).unwrap();
        e.embed_text(&format!("{base}tail"), "m", 512).unwrap();
        assert_eq!(*p.calls.lock(), 1);
    }
}
