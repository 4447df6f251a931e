//! Deterministic feature-hashing text embedder.
//!
//! Tokens are FNV-1a 64-bit hashed into 256 signed buckets; the bucket is
//! `h mod 256` and the sign is taken from the top bit of `h`. The bucket
//! counts are then L2-normalized. Every step is integer arithmetic except
//! the final square root and division, so the vectors are bit-identical
//! across runs and platforms.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::meta::MetadataDoc;

pub const DIM: usize = 256;

pub const FNV_OFFSET_BASIS: u64 = 14695981039346656037;
pub const FNV_PRIME: u64 = 1099511628211;

/// Unit-norm 256-dimensional vector, or the zero vector for empty text.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Embedding(Vec<f64>);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmbeddingError {
    #[error("expected {DIM} components, got {0}")]
    Dimension(usize),
    #[error("component is not finite")]
    NotFinite,
    #[error("vector norm {0} is neither 0 nor 1")]
    NotUnit(f64),
}

impl Embedding {
    pub fn zero() -> Self {
        Embedding(vec![0.0; DIM])
    }

    /// Accepts a vector from any source, enforcing the embedding contract.
    pub fn from_external(components: Vec<f64>) -> Result<Self, EmbeddingError> {
        if components.len() != DIM {
            return Err(EmbeddingError::Dimension(components.len()));
        }
        if components.iter().any(|c| !c.is_finite()) {
            return Err(EmbeddingError::NotFinite);
        }
        let e = Embedding(components);
        let norm = e.norm();
        if norm != 0.0 && libm::fabs(norm - 1.0) > 1e-9 {
            return Err(EmbeddingError::NotUnit(norm));
        }
        Ok(e)
    }

    fn from_counts(counts: &[i64; DIM]) -> Self {
        let mut sum_sq = 0.0f64;
        for &c in counts {
            let c = c as f64;
            sum_sq += c * c;
        }
        if sum_sq == 0.0 {
            return Embedding::zero();
        }
        let norm = libm::sqrt(sum_sq);
        Embedding(counts.iter().map(|&c| c as f64 / norm).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0.0)
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.0.iter().map(|c| c * c).sum())
    }

    /// Dot product summed in index order; 0 when either side is zero.
    pub fn dot(&self, other: &Embedding) -> f64 {
        let mut acc = 0.0;
        for i in 0..DIM {
            acc += self.0[i] * other.0[i];
        }
        acc
    }
}

impl<'de> Deserialize<'de> for Embedding {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(deserializer)?;
        Embedding::from_external(v).map_err(serde::de::Error::custom)
    }
}

/// Plug point for text embedders. Implementations outside this crate
/// build their output through [`Embedding::from_external`], which enforces
/// the same dimension and norm contract as the built-in embedder.
pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Embedding;
    fn name(&self) -> &str;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HashingEmbedder;

impl Embedder for HashingEmbedder {
    fn embed(&self, text: &str) -> Embedding {
        embed_text(text)
    }

    fn name(&self) -> &str {
        "fnv1a-256"
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET_BASIS;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(String::from)
        .collect()
}

pub fn embed_text(text: &str) -> Embedding {
    let mut counts = [0i64; DIM];
    for token in tokenize(text) {
        let h = fnv1a64(token.as_bytes());
        let bucket = (h % DIM as u64) as usize;
        counts[bucket] += if h >> 63 == 0 { 1 } else { -1 };
    }
    Embedding::from_counts(&counts)
}

/// Text that represents an entity's metadata in the vector space: last
/// path segment, mode, format, category, sorted labels, description,
/// joined by single spaces. Empty fields leave empty slots.
pub fn metadata_to_text(doc: &MetadataDoc) -> String {
    let mut parts: Vec<&str> = vec![doc.path.file_name(), doc.mode.as_str(), &doc.format, &doc.category];
    parts.extend(doc.labels.iter().map(String::as_str));
    parts.push(&doc.description);
    parts.join(" ")
}
