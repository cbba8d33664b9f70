//! Laplace-smoothed byte bigram model, the cheap draft stand-in.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::kv_cache::{CacheShape, KvCache};

use super::VOCAB_SIZE;
use super::{check_forward, tokenize, LanguageModel, LoadError, Logits, ModelError, TokenId};

/// Positions a bigram cache may hold. The model has no real context limit;
/// this only bounds the bookkeeping cache.
pub const BIGRAM_MAX_CONTEXT: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct BigramModel {
    counts: Vec<u64>,
    row_sums: Vec<u64>,
    smoothing: f64,
}

/// On-disk JSON layout.
#[derive(Serialize, Deserialize)]
struct BigramFile {
    vocab_size: usize,
    smoothing: f64,
    counts: Vec<u64>,
}

impl BigramModel {
    /// Counts adjacent pairs of `tokenize(corpus)`, BOS included.
    pub fn train(corpus: &[u8], smoothing: f64) -> Result<Self, ModelError> {
        let mut counts = vec![0u64; VOCAB_SIZE * VOCAB_SIZE];
        for pair in tokenize(corpus).windows(2) {
            counts[pair[0].index() * VOCAB_SIZE + pair[1].index()] += 1;
        }
        Self::from_counts(counts, smoothing)
    }

    pub fn from_counts(counts: Vec<u64>, smoothing: f64) -> Result<Self, ModelError> {
        if !(smoothing > 0.0 && smoothing.is_finite()) {
            return Err(ModelError::InvalidConfig(format!(
                "smoothing must be positive and finite, got {smoothing}"
            )));
        }
        if counts.len() != VOCAB_SIZE * VOCAB_SIZE {
            return Err(ModelError::InvalidConfig(format!(
                "expected {} counts, got {}",
                VOCAB_SIZE * VOCAB_SIZE,
                counts.len()
            )));
        }
        let row_sums = counts
            .chunks_exact(VOCAB_SIZE)
            .map(|r| r.iter().sum())
            .collect();
        Ok(Self {
            counts,
            row_sums,
            smoothing,
        })
    }

    pub fn count(&self, prev: TokenId, next: TokenId) -> u64 {
        self.counts[prev.index() * VOCAB_SIZE + next.index()]
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    /// `P(next | prev) = (count + s) / (row_sum + 257 s)` for every `next`.
    pub fn conditional(&self, prev: TokenId) -> Vec<f64> {
        let row = &self.counts[prev.index() * VOCAB_SIZE..(prev.index() + 1) * VOCAB_SIZE];
        let denom = self.row_sums[prev.index()] as f64 + VOCAB_SIZE as f64 * self.smoothing;
        row.iter()
            .map(|&c| (c as f64 + self.smoothing) / denom)
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&BigramFile {
            vocab_size: VOCAB_SIZE,
            smoothing: self.smoothing,
            counts: self.counts.clone(),
        })
        .expect("bigram file serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, LoadError> {
        let file: BigramFile =
            serde_json::from_str(text).map_err(|e| LoadError::Parse(e.to_string()))?;
        if file.vocab_size != VOCAB_SIZE {
            return Err(LoadError::Invalid(format!(
                "bigram vocab_size {} (expected {VOCAB_SIZE})",
                file.vocab_size
            )));
        }
        Self::from_counts(file.counts, file.smoothing)
            .map_err(|e| LoadError::Invalid(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LoadError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| LoadError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LoadError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| LoadError::io(path, e))?;
        Self::from_json(&text)
    }
}

impl LanguageModel for BigramModel {
    /// A single 1x1 layer: the cache only tracks length.
    fn cache_shape(&self) -> CacheShape {
        CacheShape::new(1, 1, 1, BIGRAM_MAX_CONTEXT)
    }

    fn forward(&self, cache: &mut KvCache, tokens: &[TokenId]) -> Result<Logits, ModelError> {
        check_forward(self.cache_shape(), VOCAB_SIZE, cache, tokens)?;
        let mut rows = Vec::with_capacity(tokens.len());
        for &tok in tokens {
            rows.push(
                self.conditional(tok)
                    .into_iter()
                    .map(|p| p.ln() as f32)
                    .collect(),
            );
            cache.write_next(0, &[0.0], &[0.0]);
            cache.commit_position()?;
        }
        Ok(rows)
    }
}
