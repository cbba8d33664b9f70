//! Shared fixtures for the criterion benchmarks.

use specdec_core::{BigramModel, TinyTransformer, TinyTransformerConfig};

pub const CORPUS: &[u8] = b"Alan Turing theorized that computers would one day become \
self-aware. The Philadelphia Eagles won the championship game. Explain the difference \
between fission and fusion energy. I used to live in Los Angeles, and I used to go to \
the beach all the time.";

pub fn target_model() -> TinyTransformer {
    TinyTransformer::init(TinyTransformerConfig::default_target(), 0).expect("valid default")
}

pub fn draft_model() -> TinyTransformer {
    TinyTransformer::init(TinyTransformerConfig::default_draft(), 1).expect("valid default")
}

pub fn bigram_draft() -> BigramModel {
    BigramModel::train(CORPUS, 1.0).expect("positive smoothing")
}
