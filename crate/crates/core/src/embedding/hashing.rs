use sha2::{Digest, Sha256};

use super::{EmbeddingProvider, ProviderError};

/// Offline, deterministic embedding provider based on feature hashing of
/// word unigrams and bigrams. Texts sharing vocabulary get similar vectors,
/// which is enough for fixture runs and tests; it is not a semantic model.
#[derive(Debug, Clone)]
pub struct HashingEmbeddings {
    full_dims: usize,
}

impl HashingEmbeddings {
    const POSITIONS_PER_TOKEN: usize = 3;

    pub fn new(full_dims: usize) -> Self {
        HashingEmbeddings { full_dims }
    }

    fn positions(token: &str, dims: usize) -> impl Iterator<Item = usize> {
        let digest = Sha256::digest(token.as_bytes());
        (0..Self::POSITIONS_PER_TOKEN).map(move |i| {
            let bytes: [u8; 8] = digest[i * 8..i * 8 + 8].try_into().expect("8 bytes");
            (u64::from_le_bytes(bytes) % dims as u64) as usize
        })
    }
}

impl Default for HashingEmbeddings {
    fn default() -> Self {
        Self::new(1536)
    }
}

impl EmbeddingProvider for HashingEmbeddings {
    fn embed(&self, text: &str, _model_id: &str, dims: Option<usize>) -> Result<Vec<f64>, ProviderError> {
        let dims = dims.unwrap_or(self.full_dims);
        let lower = text.to_lowercase();
        let words: Vec<&str> = lower
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .collect();
        let mut v = vec![0.0; dims];
        let mut bump = |token: &str, weight: f64| {
            for p in Self::positions(token, dims) {
                v[p] += weight;
            }
        };
        if words.is_empty() {
            bump(text.trim(), 1.0);
        }
        for w in &words {
            bump(w, 1.0);
        }
        for pair in words.windows(2) {
            bump(&format!("{} {}", pair[0], pair[1]), 0.5);
        }
        Ok(v)
    }

    fn supports_dims(&self, _model_id: &str) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::distance::cosine_distance_raw;

    #[test]
    fn shared_vocabulary_means_closer_vectors() {
        let h = HashingEmbeddings::default();
        let a = h.embed("rust async cancellation safety", "m", Some(512)).unwrap();
        let b = h.embed("cancellation safety in async rust", "m", Some(512)).unwrap();
        let c = h.embed("css grid layout tutorial", "m", Some(512)).unwrap();
        assert!(cosine_distance_raw(&a, &b).unwrap() < cosine_distance_raw(&a, &c).unwrap());
    }

    #[test]
    fn deterministic_and_never_zero() {
        let h = HashingEmbeddings::default();
        assert_eq!(
            h.embed("x y", "m", Some(1024)).unwrap(),
            h.embed("x y", "m", Some(1024)).unwrap()
        );
        assert!(h.embed("!!!", "m", Some(512)).unwrap().iter().any(|&x| x > 0.0));
    }
}
