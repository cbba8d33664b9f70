//! Resolving model references (`tiny:<path>`, `bigram:<corpus>`, bare paths).

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::kv_cache::{CacheShape, KvCache};

use super::{
    load_transformer, BigramModel, LanguageModel, LoadError, Logits, ModelError, TinyTransformer,
    TokenId, WEIGHTS_MAGIC,
};

/// Laplace constant used when a reference trains a bigram model on the fly.
pub const DEFAULT_SMOOTHING: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelRef {
    /// TTWF weight file.
    Tiny(PathBuf),
    /// Bigram trained on the given corpus at load time.
    BigramCorpus(PathBuf),
    /// A TTWF file or a saved bigram model, decided by the file's magic.
    Path(PathBuf),
}

impl ModelRef {
    /// Resolves relative paths against `base`.
    pub fn relative_to(self, base: &Path) -> Self {
        let join = |p: PathBuf| if p.is_relative() { base.join(p) } else { p };
        match self {
            ModelRef::Tiny(p) => ModelRef::Tiny(join(p)),
            ModelRef::BigramCorpus(p) => ModelRef::BigramCorpus(join(p)),
            ModelRef::Path(p) => ModelRef::Path(join(p)),
        }
    }
}

impl FromStr for ModelRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() {
            return Err("empty model reference".into());
        }
        Ok(if let Some(p) = s.strip_prefix("tiny:") {
            ModelRef::Tiny(p.into())
        } else if let Some(p) = s.strip_prefix("bigram:") {
            ModelRef::BigramCorpus(p.into())
        } else {
            ModelRef::Path(s.into())
        })
    }
}

impl fmt::Display for ModelRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelRef::Tiny(p) => write!(f, "tiny:{}", p.display()),
            ModelRef::BigramCorpus(p) => write!(f, "bigram:{}", p.display()),
            ModelRef::Path(p) => write!(f, "{}", p.display()),
        }
    }
}

/// Either built-in model, loaded from a [`ModelRef`].
#[derive(Debug, Clone)]
pub enum AnyModel {
    Tiny(TinyTransformer),
    Bigram(BigramModel),
}

impl LanguageModel for AnyModel {
    fn cache_shape(&self) -> CacheShape {
        match self {
            AnyModel::Tiny(m) => m.cache_shape(),
            AnyModel::Bigram(m) => m.cache_shape(),
        }
    }

    fn forward(&self, cache: &mut KvCache, tokens: &[TokenId]) -> Result<Logits, ModelError> {
        match self {
            AnyModel::Tiny(m) => m.forward(cache, tokens),
            AnyModel::Bigram(m) => m.forward(cache, tokens),
        }
    }

    fn vocab_size(&self) -> usize {
        match self {
            AnyModel::Tiny(m) => m.vocab_size(),
            AnyModel::Bigram(m) => m.vocab_size(),
        }
    }
}

pub fn load_model(reference: &ModelRef) -> Result<AnyModel, LoadError> {
    match reference {
        ModelRef::Tiny(p) => load_transformer(p).map(AnyModel::Tiny),
        ModelRef::BigramCorpus(p) => {
            let corpus = std::fs::read(p).map_err(|e| LoadError::io(p, e))?;
            BigramModel::train(&corpus, DEFAULT_SMOOTHING)
                .map(AnyModel::Bigram)
                .map_err(|e| LoadError::Invalid(e.to_string()))
        }
        ModelRef::Path(p) => {
            let bytes = std::fs::read(p).map_err(|e| LoadError::io(p, e))?;
            if bytes.starts_with(&WEIGHTS_MAGIC) {
                super::read_transformer(&bytes[..]).map(AnyModel::Tiny)
            } else {
                let text = String::from_utf8(bytes)
                    .map_err(|_| LoadError::Parse(format!("{}: not a model file", p.display())))?;
                BigramModel::from_json(&text).map(AnyModel::Bigram)
            }
        }
    }
}
