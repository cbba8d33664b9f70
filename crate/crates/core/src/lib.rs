//! Autoregressive and speculative text generation over pluggable
//! token-probability models.
//!
//! - [`kv_cache`]: per-layer key/value storage with append and truncate.
//! - [`model`]: the forward contract, a tiny decoder-only transformer, a byte
//!   bigram model and the TTWF weight format.
//! - [`decode`]: warping, SplitMix64 sampling, and the generation loops.
//! - [`bench`]: analytic cost model, scenario runner and CSV/JSON reports.

pub mod bench;
pub mod decode;
pub mod kv_cache;
pub mod model;

pub use decode::{
    autoregressive_generate, generate, speculative_generate, DecodeError, DecodeMode, Generation,
    GenerationConfig, GenerationStats, ProbDist, SplitMix64,
};
pub use kv_cache::{CacheError, CacheShape, KvCache};
pub use model::{
    detokenize, tokenize, AnyModel, BigramModel, LanguageModel, LoadError, ModelError, ModelRef,
    TinyTransformer, TinyTransformerConfig, TokenId, VOCAB_SIZE,
};
