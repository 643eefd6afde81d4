use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::folded_words;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(pub Vec<f64>);

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Cosine similarity; 0 when either vector is all-zero.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.0.iter().zip(&b.0) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

pub trait EmbeddingProvider: Send + Sync {
    fn id(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed_text(&self, text: &str) -> Result<EmbeddingVector>;
}

pub fn embed(text: &str, provider: &dyn EmbeddingProvider) -> Result<EmbeddingVector> {
    if text.trim().is_empty() {
        return Err(Error::EmptyInput("cannot embed empty text".into()));
    }
    provider.embed_text(text)
}

/// Offline embedding: hashed character trigrams of each boundary-padded word,
/// plus down-weighted character unigrams, L2-normalized.
///
/// Trigrams alone give near-zero similarity for short unrelated-looking
/// synonyms; the unigram channel keeps shared letters from vanishing.
#[derive(Debug, Clone)]
pub struct NgramHashEmbedder {
    dim: usize,
    unigram_weight: f64,
}

impl Default for NgramHashEmbedder {
    fn default() -> Self {
        NgramHashEmbedder::new(512)
    }
}

impl NgramHashEmbedder {
    pub fn new(dim: usize) -> Self {
        NgramHashEmbedder {
            dim: dim.max(1),
            unigram_weight: 0.35,
        }
    }

    pub fn with_unigram_weight(mut self, w: f64) -> Self {
        self.unigram_weight = w;
        self
    }

    fn bucket(&self, gram: &[char], salt: u8) -> usize {
        // FNV-1a, stable across platforms and runs
        let mut h: u64 = 0xcbf29ce484222325 ^ u64::from(salt);
        for c in gram {
            for b in (*c as u32).to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x100000001b3);
            }
        }
        (h % self.dim as u64) as usize
    }
}

impl EmbeddingProvider for NgramHashEmbedder {
    fn id(&self) -> &str {
        "ngram-hash"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
        let words = folded_words(text);
        if words.is_empty() {
            return Err(Error::EmptyInput(format!("no word characters in {text:?}")));
        }
        let mut v = vec![0.0; self.dim];
        for w in &words {
            let padded: Vec<char> = std::iter::once('#')
                .chain(w.chars())
                .chain(std::iter::once('#'))
                .collect();
            for g in padded.windows(3) {
                v[self.bucket(g, 3)] += 1.0;
            }
            if self.unigram_weight > 0.0 {
                for c in w.chars() {
                    v[self.bucket(&[c], 1)] += self.unigram_weight;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut v {
            *x /= norm;
        }
        Ok(EmbeddingVector(v))
    }
}
