//! Token-probability models behind a single forward contract.
//!
//! A model consumes new tokens against a caller-owned [`KvCache`] and returns
//! one row of logits per new token. Row `i` scores the position that follows
//! `prefix + tokens[..=i]`, so a single call can verify several proposed
//! tokens at once.

mod bigram;
mod source;
mod transformer;
mod vocab;
mod weights;

pub use bigram::BigramModel;
pub use source::{load_model, AnyModel, ModelRef};
pub use transformer::{TinyTransformer, TinyTransformerConfig};
pub use vocab::{detokenize, tokenize, TokenId, VOCAB_SIZE};
pub use weights::{
    load_transformer, read_transformer, save_transformer, write_transformer, WEIGHTS_MAGIC,
    WEIGHTS_VERSION,
};

use std::path::PathBuf;

use thiserror::Error;

use crate::kv_cache::{CacheError, CacheShape, KvCache};

/// One logits row per new token, each `vocab_size` wide.
pub type Logits = Vec<Vec<f32>>;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("context overflow: {needed} positions requested, max context is {max_context}")]
    ContextOverflow { needed: usize, max_context: usize },
    #[error("forward called with no tokens")]
    EmptyInput,
    #[error("cache shape {cache:?} does not match model shape {model:?}")]
    ShapeMismatch {
        cache: CacheShape,
        model: CacheShape,
    },
    #[error("token {token} outside vocabulary of size {vocab_size}")]
    TokenOutOfRange { token: u32, vocab_size: usize },
    #[error(transparent)]
    Cache(#[from] CacheError),
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("i/o error: {0}")]
    Stream(#[from] std::io::Error),
    #[error("bad magic {found:?}, expected \"TTWF\"")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported weight file version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("weight payload holds {found} bytes, header config needs {expected}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("malformed model file: {0}")]
    Parse(String),
}

impl LoadError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LoadError::Io {
            path: path.into(),
            source,
        }
    }
}

pub trait LanguageModel: Send + Sync {
    /// Geometry of the cache this model reads and writes.
    fn cache_shape(&self) -> CacheShape;

    /// Runs the model over `tokens`, appending one cache position per token,
    /// and returns one logits row per token.
    ///
    /// Implementations are pure in (weights, cached prefix, tokens): identical
    /// inputs give bit-identical rows regardless of how a sequence is split
    /// across calls.
    fn forward(&self, cache: &mut KvCache, tokens: &[TokenId]) -> Result<Logits, ModelError>;

    fn vocab_size(&self) -> usize {
        VOCAB_SIZE
    }

    fn max_context(&self) -> usize {
        self.cache_shape().capacity
    }

    fn new_cache(&self) -> KvCache {
        KvCache::new(self.cache_shape()).expect("model reports a valid cache shape")
    }
}

impl<M: LanguageModel + ?Sized> LanguageModel for &M {
    fn cache_shape(&self) -> CacheShape {
        (**self).cache_shape()
    }

    fn forward(&self, cache: &mut KvCache, tokens: &[TokenId]) -> Result<Logits, ModelError> {
        (**self).forward(cache, tokens)
    }

    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn max_context(&self) -> usize {
        (**self).max_context()
    }
}

impl<M: LanguageModel + ?Sized> LanguageModel for Box<M> {
    fn cache_shape(&self) -> CacheShape {
        (**self).cache_shape()
    }

    fn forward(&self, cache: &mut KvCache, tokens: &[TokenId]) -> Result<Logits, ModelError> {
        (**self).forward(cache, tokens)
    }

    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn max_context(&self) -> usize {
        (**self).max_context()
    }
}

/// Checks shared by every forward implementation.
pub(crate) fn check_forward(
    shape: CacheShape,
    vocab_size: usize,
    cache: &KvCache,
    tokens: &[TokenId],
) -> Result<(), ModelError> {
    if tokens.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    if cache.shape() != shape {
        return Err(ModelError::ShapeMismatch {
            cache: cache.shape(),
            model: shape,
        });
    }
    let needed = cache.len() + tokens.len();
    if needed > shape.capacity {
        return Err(ModelError::ContextOverflow {
            needed,
            max_context: shape.capacity,
        });
    }
    if let Some(bad) = tokens.iter().find(|t| t.index() >= vocab_size) {
        return Err(ModelError::TokenOutOfRange {
            token: bad.id(),
            vocab_size,
        });
    }
    Ok(())
}
