//! Distribution warping, deterministic sampling and the two generation loops.

pub mod dist;
mod generate;
pub mod rng;

pub use dist::{
    accept_probability, one_step_emission, residual_distribution, sample_from_dist,
    sample_with_uniform, softmax_with_temperature, top_p_filter, ProbDist, Warp,
};
pub use generate::{
    autoregressive_generate, generate, speculative_generate, speculative_generate_traced,
    CycleTrace, DecodeMode, Generation, GenerationConfig, GenerationStats,
};
pub use rng::SplitMix64;

use thiserror::Error;

use crate::kv_cache::CacheError;
use crate::model::{ModelError, TokenId};

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("non-finite logit at index {index}")]
    NonFiniteLogit { index: usize },
    #[error("temperature must be finite and >= 0, got {0}")]
    InvalidTemperature(f64),
    #[error("top-p must lie in (0, 1], got {0}")]
    InvalidTopP(f64),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("distribution sums to {sum}, cannot sample")]
    DegenerateDistribution { sum: f64 },
    #[error("draft proposed token {token} with zero draft probability")]
    InvalidProposal { token: TokenId },
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
    #[error("invalid prompt: {0}")]
    InvalidPrompt(String),
    #[error("vocabulary mismatch: target {target}, draft {draft}")]
    VocabMismatch { target: usize, draft: usize },
    #[error("context overflow: generation needs {needed} positions, max context is {max_context}")]
    ContextOverflow { needed: usize, max_context: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Cache(#[from] CacheError),
}
