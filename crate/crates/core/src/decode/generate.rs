//! Autoregressive and speculative generation loops.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::kv_cache::KvCache;
use crate::model::{LanguageModel, Logits, TokenId};

use super::dist::{accept_probability, residual_distribution, sample_from_dist, ProbDist, Warp};
use super::rng::SplitMix64;
use super::DecodeError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    Autoregressive,
    Speculative,
}

impl DecodeMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DecodeMode::Autoregressive => "autoregressive",
            DecodeMode::Speculative => "speculative",
        }
    }

    /// Report banner, e.g. `Speculative Decode`.
    pub fn banner(self) -> &'static str {
        match self {
            DecodeMode::Autoregressive => "Autoregressive Decode",
            DecodeMode::Speculative => "Speculative Decode",
        }
    }
}

impl fmt::Display for DecodeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DecodeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "autoregressive" => Ok(DecodeMode::Autoregressive),
            "speculative" => Ok(DecodeMode::Speculative),
            other => Err(format!("unknown decode mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationConfig {
    pub mode: DecodeMode,
    /// Draft tokens per speculative cycle; unused in autoregressive mode.
    pub k: usize,
    pub max_new_tokens: usize,
    pub temperature: f64,
    pub top_p: f64,
    pub seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            mode: DecodeMode::Autoregressive,
            k: 5,
            max_new_tokens: 40,
            temperature: 0.8,
            top_p: 1.0,
            seed: 0,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), DecodeError> {
        if self.k == 0 {
            return Err(DecodeError::InvalidConfig("k must be at least 1".into()));
        }
        if self.max_new_tokens == 0 {
            return Err(DecodeError::InvalidConfig(
                "max_new_tokens must be at least 1".into(),
            ));
        }
        self.warp().map(|_| ())
    }

    pub fn warp(&self) -> Result<Warp, DecodeError> {
        Warp::new(self.temperature, self.top_p)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GenerationStats {
    pub draft_forward_calls: usize,
    pub target_forward_calls: usize,
    pub tokens_proposed: usize,
    pub tokens_accepted: usize,
    pub tokens_rejected: usize,
    pub bonus_tokens: usize,
    pub wall_time_total: Duration,
    pub wall_time_draft: Duration,
    pub wall_time_target: Duration,
}

impl GenerationStats {
    /// Accepted over proposed draft tokens; `None` before any proposal.
    pub fn acceptance_rate(&self) -> Option<f64> {
        (self.tokens_proposed > 0)
            .then(|| self.tokens_accepted as f64 / self.tokens_proposed as f64)
    }

    /// Accepted over draft tokens that reached the acceptance test. Drafts
    /// after the first rejection of a cycle are proposed but never judged,
    /// so this is the per-position acceptance probability the cost model
    /// expects.
    pub fn verified_acceptance_rate(&self) -> Option<f64> {
        let judged = self.tokens_accepted + self.tokens_rejected;
        (judged > 0).then(|| self.tokens_accepted as f64 / judged as f64)
    }

    /// `key = value` lines, one per field.
    pub fn lines(&self) -> Vec<String> {
        vec![
            format!("draft_forward_calls = {}", self.draft_forward_calls),
            format!("target_forward_calls = {}", self.target_forward_calls),
            format!("tokens_proposed = {}", self.tokens_proposed),
            format!("tokens_accepted = {}", self.tokens_accepted),
            format!("tokens_rejected = {}", self.tokens_rejected),
            format!("bonus_tokens = {}", self.bonus_tokens),
            format!(
                "wall_time_total = {:.6}",
                self.wall_time_total.as_secs_f64()
            ),
            format!(
                "wall_time_draft = {:.6}",
                self.wall_time_draft.as_secs_f64()
            ),
            format!(
                "wall_time_target = {:.6}",
                self.wall_time_target.as_secs_f64()
            ),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    /// Newly generated tokens, prompt excluded.
    pub tokens: Vec<TokenId>,
    pub stats: GenerationStats,
}

/// What one speculative cycle did, with both caches as they stand after
/// rollback.
#[derive(Debug)]
pub struct CycleTrace<'a> {
    pub proposed: &'a [TokenId],
    pub accepted: usize,
    /// Residual replacement or bonus token, if one was emitted.
    pub extra: Option<TokenId>,
    pub bonus: bool,
    /// Prompt plus everything emitted so far; the last token is pending and
    /// not yet cached.
    pub sequence: &'a [TokenId],
    pub target_cache: &'a KvCache,
    pub draft_cache: &'a KvCache,
}

fn check_prompt(prompt: &[TokenId], vocab_size: usize) -> Result<(), DecodeError> {
    match prompt.first() {
        None => Err(DecodeError::InvalidPrompt("prompt is empty".into())),
        Some(&t) if t != TokenId::BOS => Err(DecodeError::InvalidPrompt(
            "prompt must start with BOS".into(),
        )),
        _ => match prompt.iter().find(|t| t.index() >= vocab_size) {
            Some(t) => Err(DecodeError::InvalidPrompt(format!(
                "token {t} outside vocabulary"
            ))),
            None => Ok(()),
        },
    }
}

fn check_context(needed: usize, max_context: usize) -> Result<(), DecodeError> {
    if needed > max_context {
        return Err(DecodeError::ContextOverflow {
            needed,
            max_context,
        });
    }
    Ok(())
}

fn timed_forward<M: LanguageModel + ?Sized>(
    model: &M,
    cache: &mut KvCache,
    tokens: &[TokenId],
    calls: &mut usize,
    elapsed: &mut Duration,
) -> Result<Logits, DecodeError> {
    let start = Instant::now();
    let rows = model.forward(cache, tokens)?;
    *elapsed += start.elapsed();
    *calls += 1;
    Ok(rows)
}

/// Greedy picks the argmax without touching the RNG; otherwise one draw.
fn pick(dist: &ProbDist, greedy: bool, rng: &mut SplitMix64) -> Result<TokenId, DecodeError> {
    if greedy {
        Ok(dist.argmax())
    } else {
        sample_from_dist(dist, rng)
    }
}

/// Plain KV-cached decoding: one forward over the prompt, then one
/// single-token forward per emitted token.
pub fn autoregressive_generate<M: LanguageModel + ?Sized>(
    model: &M,
    prompt: &[TokenId],
    cfg: &GenerationConfig,
    rng: &mut SplitMix64,
) -> Result<Generation, DecodeError> {
    let start = Instant::now();
    cfg.validate()?;
    let warp = cfg.warp()?;
    check_prompt(prompt, model.vocab_size())?;
    check_context(prompt.len() + cfg.max_new_tokens, model.max_context())?;

    let mut stats = GenerationStats::default();
    let mut cache = model.new_cache();
    let mut rows = timed_forward(
        model,
        &mut cache,
        prompt,
        &mut stats.target_forward_calls,
        &mut stats.wall_time_target,
    )?;

    let mut tokens = Vec::with_capacity(cfg.max_new_tokens);
    for _ in 0..cfg.max_new_tokens {
        let last = rows.last().expect("forward returns one row per token");
        let tok = pick(&warp.apply(last)?, warp.is_greedy(), rng)?;
        tokens.push(tok);
        rows = timed_forward(
            model,
            &mut cache,
            &[tok],
            &mut stats.target_forward_calls,
            &mut stats.wall_time_target,
        )?;
    }
    stats.wall_time_total = start.elapsed();
    Ok(Generation { tokens, stats })
}

pub fn speculative_generate<T, D>(
    target: &T,
    draft: &D,
    prompt: &[TokenId],
    cfg: &GenerationConfig,
    rng: &mut SplitMix64,
) -> Result<Generation, DecodeError>
where
    T: LanguageModel + ?Sized,
    D: LanguageModel + ?Sized,
{
    speculative_generate_traced(target, draft, prompt, cfg, rng, |_| {})
}

/// Speculative decoding with a per-cycle observer.
///
/// Each cycle drafts `k' = min(k, remaining)` tokens one at a time, verifies
/// `[pending, drafts..]` with a single target forward, runs the
/// accept/reject test left to right, emits a residual replacement on the
/// first rejection or a bonus token when every draft survives (budget
/// permitting), then truncates both caches to the committed prefix. The last
/// emitted token stays pending: its KV entries are computed by the next
/// cycle's forwards.
///
/// RNG order per cycle: `k'` draft draws, the acceptance draws in order, then
/// at most one residual or bonus draw. Greedy mode consumes none.
pub fn speculative_generate_traced<T, D, F>(
    target: &T,
    draft: &D,
    prompt: &[TokenId],
    cfg: &GenerationConfig,
    rng: &mut SplitMix64,
    mut observe: F,
) -> Result<Generation, DecodeError>
where
    T: LanguageModel + ?Sized,
    D: LanguageModel + ?Sized,
    F: FnMut(&CycleTrace<'_>),
{
    let start = Instant::now();
    cfg.validate()?;
    let warp = cfg.warp()?;
    let greedy = warp.is_greedy();
    if target.vocab_size() != draft.vocab_size() {
        return Err(DecodeError::VocabMismatch {
            target: target.vocab_size(),
            draft: draft.vocab_size(),
        });
    }
    check_prompt(prompt, target.vocab_size())?;
    let needed = prompt.len() + cfg.max_new_tokens + cfg.k + 1;
    check_context(needed, target.max_context())?;
    check_context(needed, draft.max_context())?;

    let mut stats = GenerationStats::default();
    let mut target_cache = target.new_cache();
    let mut draft_cache = draft.new_cache();

    // Everything but the last prompt token; that one is the first pending token.
    let head = &prompt[..prompt.len() - 1];
    if !head.is_empty() {
        timed_forward(
            draft,
            &mut draft_cache,
            head,
            &mut stats.draft_forward_calls,
            &mut stats.wall_time_draft,
        )?;
        timed_forward(
            target,
            &mut target_cache,
            head,
            &mut stats.target_forward_calls,
            &mut stats.wall_time_target,
        )?;
    }

    let mut sequence = prompt.to_vec();
    let mut emitted = 0;
    let mut drafts = Vec::with_capacity(cfg.k);
    let mut draft_dists = Vec::with_capacity(cfg.k);

    while emitted < cfg.max_new_tokens {
        let k_cycle = cfg.k.min(cfg.max_new_tokens - emitted);
        let committed = sequence.len() - 1;
        debug_assert_eq!(target_cache.len(), committed);

        drafts.clear();
        draft_dists.clear();
        for i in 0..k_cycle {
            // The draft cache may lag the committed prefix by one token when
            // the previous cycle accepted every draft; catch up in one call.
            let feed = if i == 0 {
                &sequence[draft_cache.len()..]
            } else {
                &drafts[i - 1..i]
            };
            let rows = timed_forward(
                draft,
                &mut draft_cache,
                feed,
                &mut stats.draft_forward_calls,
                &mut stats.wall_time_draft,
            )?;
            let p = warp.apply(rows.last().expect("non-empty forward"))?;
            drafts.push(pick(&p, greedy, rng)?);
            draft_dists.push(p);
        }

        let mut verify = Vec::with_capacity(k_cycle + 1);
        verify.push(sequence[committed]);
        verify.extend_from_slice(&drafts);
        let rows = timed_forward(
            target,
            &mut target_cache,
            &verify,
            &mut stats.target_forward_calls,
            &mut stats.wall_time_target,
        )?;
        let target_dists = rows
            .iter()
            .map(|r| warp.apply(r))
            .collect::<Result<Vec<_>, _>>()?;

        let mut accepted = 0;
        let mut extra = None;
        for i in 0..k_cycle {
            let q = &target_dists[i];
            let ok = if greedy {
                drafts[i] == q.argmax()
            } else {
                let u = rng.next_uniform();
                u < accept_probability(q, &draft_dists[i], drafts[i])?
            };
            if ok {
                accepted += 1;
                continue;
            }
            let replacement = if greedy {
                q.argmax()
            } else {
                sample_from_dist(&residual_distribution(q, &draft_dists[i]), rng)?
            };
            extra = Some(replacement);
            stats.tokens_rejected += 1;
            break;
        }
        stats.tokens_proposed += k_cycle;
        stats.tokens_accepted += accepted;
        sequence.extend_from_slice(&drafts[..accepted]);
        emitted += accepted;

        let mut bonus = false;
        if extra.is_none() && emitted < cfg.max_new_tokens {
            extra = Some(pick(&target_dists[k_cycle], greedy, rng)?);
            stats.bonus_tokens += 1;
            bonus = true;
        }
        if let Some(tok) = extra {
            sequence.push(tok);
            emitted += 1;
        }

        // Drop KV entries of rejected drafts (and of the token that is now
        // pending) from both caches.
        let keep = sequence.len() - 1;
        target_cache.truncate(keep.min(target_cache.len()))?;
        draft_cache.truncate(keep.min(draft_cache.len()))?;

        observe(&CycleTrace {
            proposed: &drafts,
            accepted,
            extra,
            bonus,
            sequence: &sequence,
            target_cache: &target_cache,
            draft_cache: &draft_cache,
        });
    }

    stats.wall_time_total = start.elapsed();
    Ok(Generation {
        tokens: sequence[prompt.len()..].to_vec(),
        stats,
    })
}

/// Runs `cfg.mode` with an RNG seeded from `cfg.seed`. Speculative mode
/// needs a draft model.
pub fn generate<T, D>(
    target: &T,
    draft: Option<&D>,
    prompt: &[TokenId],
    cfg: &GenerationConfig,
) -> Result<Generation, DecodeError>
where
    T: LanguageModel + ?Sized,
    D: LanguageModel + ?Sized,
{
    let mut rng = SplitMix64::new(cfg.seed);
    match (cfg.mode, draft) {
        (DecodeMode::Autoregressive, _) => autoregressive_generate(target, prompt, cfg, &mut rng),
        (DecodeMode::Speculative, Some(d)) => {
            speculative_generate(target, d, prompt, cfg, &mut rng)
        }
        (DecodeMode::Speculative, None) => Err(DecodeError::InvalidConfig(
            "speculative mode requires a draft model".into(),
        )),
    }
}
