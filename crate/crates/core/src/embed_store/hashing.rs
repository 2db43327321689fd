//! Deterministic feature-hash embedder for offline runs.
//!
//! Text is lowercased and split on runs of non-alphanumeric characters. Each
//! token is hashed with 64-bit FNV-1a; the hash picks a coordinate
//! (`h mod dim`) and a sign (bit 63 clear is +1, set is -1). Signs accumulate
//! per occurrence and the result is L2-normalized.

use async_trait::async_trait;

use super::{EmbedError, EmbeddingProvider};

pub const DEFAULT_DIM: usize = 384;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureHashEmbedder {
    dim: usize,
}

impl FeatureHashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }

    /// Embeds one text. `None` when the text has no tokens (or every
    /// coordinate cancels out), since a zero vector cannot be normalized.
    pub fn embed_one(&self, text: &str) -> Option<Vec<f64>> {
        let lowered = text.to_lowercase();
        let mut acc = vec![0.0f64; self.dim];
        for token in lowered
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
        {
            let h = fnv1a64(token.as_bytes());
            let index = (h % self.dim as u64) as usize;
            acc[index] += if h >> 63 == 0 { 1.0 } else { -1.0 };
        }
        let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return None;
        }
        acc.iter_mut().for_each(|x| *x /= norm);
        Some(acc)
    }
}

impl Default for FeatureHashEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIM)
    }
}

#[async_trait]
impl EmbeddingProvider for FeatureHashEmbedder {
    fn fingerprint(&self) -> String {
        format!("feature-hash-fnv1a64/dim={}/v1", self.dim)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    async fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        texts
            .iter()
            .enumerate()
            .map(|(index, t)| self.embed_one(t).ok_or(EmbedError::EmptyText { index }))
            .collect()
    }
}
