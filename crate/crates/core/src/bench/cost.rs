//! Closed-form cost model for speculative decoding.
//!
//! With per-position acceptance probability `alpha`, `k` drafts per cycle
//! and a draft forward costing `c` target forwards, one cycle emits
//! `1 + alpha + ... + alpha^k` tokens on average and costs `k*c + 1`.

use super::BenchError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModelParams {
    pub alpha: f64,
    pub k: usize,
    pub c: f64,
}

impl CostModelParams {
    pub fn new(alpha: f64, k: usize, c: f64) -> Result<Self, BenchError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(BenchError::InvalidScenario(format!(
                "alpha must lie in [0, 1], got {alpha}"
            )));
        }
        if k == 0 {
            return Err(BenchError::InvalidScenario("k must be at least 1".into()));
        }
        if !(c >= 0.0 && c.is_finite()) {
            return Err(BenchError::InvalidScenario(format!(
                "cost ratio must be finite and >= 0, got {c}"
            )));
        }
        Ok(Self { alpha, k, c })
    }
}

/// `sum_{i=0..=k} alpha^i`, which is `k + 1` at `alpha = 1`.
pub fn expected_tokens_per_cycle(alpha: f64, k: usize) -> f64 {
    let mut term = 1.0;
    let mut total = 1.0;
    for _ in 0..k {
        term *= alpha;
        total += term;
    }
    total
}

/// Expected tokens per cycle over cycle cost in target-forward units.
pub fn expected_speedup(params: &CostModelParams) -> f64 {
    expected_tokens_per_cycle(params.alpha, params.k) / (params.k as f64 * params.c + 1.0)
}
