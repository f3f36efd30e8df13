//! Deterministic text embedding for account-description matching.
//!
//! Descriptions are lowercased, whitespace-collapsed, split into character
//! trigrams, and hashed into a fixed number of term-frequency buckets with
//! FNV-1a. The resulting vector is L2-normalized, so the dot product of two
//! embeddings is their cosine similarity. The whole scheme is pure arithmetic
//! over the input bytes: the same description embeds to the same vector on
//! every platform and every run.

use crate::error::{Error, Result};

pub const DEFAULT_DIMENSION: usize = 2048;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Lowercase and collapse runs of whitespace to single spaces.
pub fn normalize_text(text: &str) -> String {
    text.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Hashed character-trigram embedder.
#[derive(Debug, Clone)]
pub struct TrigramEmbedder {
    dimension: usize,
}

impl Default for TrigramEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIMENSION)
    }
}

impl TrigramEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Embed a description into a unit-norm term-frequency vector.
    ///
    /// Errors if the text is empty after whitespace normalization.
    pub fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let normalized = normalize_text(text);
        if normalized.is_empty() {
            return Err(Error::invalid("cannot embed empty description"));
        }
        let chars: Vec<char> = normalized.chars().collect();
        let mut counts = vec![0.0f64; self.dimension];
        if chars.len() < 3 {
            let bucket = (fnv1a(normalized.as_bytes()) % self.dimension as u64) as usize;
            counts[bucket] += 1.0;
        } else {
            let mut gram = String::with_capacity(12);
            for window in chars.windows(3) {
                gram.clear();
                gram.extend(window);
                let bucket = (fnv1a(gram.as_bytes()) % self.dimension as u64) as usize;
                counts[bucket] += 1.0;
            }
        }
        let norm = counts.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in &mut counts {
            *v /= norm;
        }
        Ok(counts)
    }
}

/// Dot product of two unit vectors, i.e. their cosine similarity.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
