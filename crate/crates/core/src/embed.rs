//! Embedding vectors, the provider trait and the hashed bag-of-words provider.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmbedError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("text has no embeddable tokens")]
    ZeroVector,
    #[error("embedding contains a non-finite value")]
    NonFinite,
    #[error("expected dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding provider failed: {0}")]
    Provider(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f32>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Result<Self, EmbedError> {
        if values.is_empty() {
            return Err(EmbedError::DimensionMismatch { expected: 1, got: 0 });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        Ok(EmbeddingVector { values })
    }

    /// Scales to unit Euclidean norm.
    pub fn normalized(values: Vec<f64>) -> Result<Self, EmbedError> {
        let norm = libm::sqrt(values.iter().map(|v| v * v).sum::<f64>());
        if !norm.is_finite() {
            return Err(EmbedError::NonFinite);
        }
        if norm == 0.0 {
            return Err(EmbedError::ZeroVector);
        }
        Self::new(values.into_iter().map(|v| (v / norm) as f32).collect())
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }
}

pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum()
}

pub fn norm(a: &[f32]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// Cosine similarity, clamped to [-1, 1]; zero vectors score 0.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let d = norm(a) * norm(b);
    if d == 0.0 {
        return 0.0;
    }
    (dot(a, b) / d).clamp(-1.0, 1.0)
}

pub trait Embedder {
    /// Identifies provider and model; stored in index metadata.
    fn tag(&self) -> String;
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;
}

impl<E: Embedder + ?Sized> Embedder for &E {
    fn tag(&self) -> String {
        (**self).tag()
    }
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        (**self).embed(text)
    }
}

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "has", "have", "in", "into", "is", "it", "its", "of", "on",
    "or", "that", "the", "their", "this", "to", "was", "were", "will", "with",
];

/// Lowercased alphanumeric runs of length ≥ 2, stopwords removed.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut flush = |cur: &mut String| {
        if cur.chars().count() >= 2 && !STOPWORDS.contains(&cur.as_str()) {
            out.push(core::mem::take(cur));
        } else {
            cur.clear();
        }
    };
    for ch in text.chars().flat_map(char::to_lowercase) {
        if ch.is_alphanumeric() {
            cur.push(ch);
        } else {
            flush(&mut cur);
        }
    }
    flush(&mut cur);
    out
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic test provider: each token adds ±1 at `fnv1a64(token) % dim`,
/// the sign taken from the hash's top bit, then the vector is unit-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedBagOfWords {
    dimension: usize,
}

impl HashedBagOfWords {
    pub const DEFAULT_DIMENSION: usize = 512;

    pub fn new(dimension: usize) -> Self {
        HashedBagOfWords { dimension: dimension.max(1) }
    }
}

impl Default for HashedBagOfWords {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIMENSION)
    }
}

impl Embedder for HashedBagOfWords {
    fn tag(&self) -> String {
        format!("hashed-bow-{}", self.dimension)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let mut v = vec![0.0f64; self.dimension];
        for t in tokenize(text) {
            let h = fnv1a64(t.as_bytes());
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            v[(h % self.dimension as u64) as usize] += sign;
        }
        EmbeddingVector::normalized(v)
    }
}
