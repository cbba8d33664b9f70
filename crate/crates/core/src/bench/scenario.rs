//! Scenario files and the sequential scenario runner.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;

use crate::decode::{
    autoregressive_generate, speculative_generate, DecodeMode, GenerationConfig, GenerationStats,
    SplitMix64,
};
use crate::kv_cache::{CacheShape, KvCache};
use crate::model::{
    load_model, tokenize, AnyModel, LanguageModel, Logits, ModelError, ModelRef, TokenId,
};

use super::report::BenchRecord;
use super::BenchError;

pub const DEFAULT_TARGET_DELAY: Duration = Duration::from_millis(10);
pub const DEFAULT_DRAFT_DELAY: Duration = Duration::from_millis(1);

/// Wraps a model and sleeps for a fixed time before every forward call,
/// standing in for the cost of a much larger network.
#[derive(Debug, Clone)]
pub struct Delayed<M> {
    inner: M,
    delay: Duration,
}

impl<M> Delayed<M> {
    pub fn new(inner: M, delay: Duration) -> Self {
        Self { inner, delay }
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }
}

impl<M: LanguageModel> LanguageModel for Delayed<M> {
    fn cache_shape(&self) -> CacheShape {
        self.inner.cache_shape()
    }

    fn forward(&self, cache: &mut KvCache, tokens: &[TokenId]) -> Result<Logits, ModelError> {
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        self.inner.forward(cache, tokens)
    }

    fn vocab_size(&self) -> usize {
        self.inner.vocab_size()
    }

    fn max_context(&self) -> usize {
        self.inner.max_context()
    }
}

#[derive(Debug, Clone)]
pub struct Scenario<T = AnyModel, D = AnyModel> {
    pub id: String,
    pub target: T,
    pub draft: D,
    pub prompt: Vec<u8>,
    /// `mode` is ignored: every scenario runs both modes.
    pub cfg: GenerationConfig,
    pub repetitions: usize,
    pub draft_delay: Duration,
    pub target_delay: Duration,
}

/// One `[[scenario]]` table of a scenario file, before models are loaded.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub id: String,
    pub target: String,
    pub draft: String,
    pub prompt: String,
    #[serde(default = "defaults::k")]
    pub k: usize,
    #[serde(default = "defaults::max_new_tokens")]
    pub max_new_tokens: usize,
    #[serde(default = "defaults::temperature")]
    pub temperature: f64,
    #[serde(default = "defaults::top_p")]
    pub top_p: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::repetitions")]
    pub repetitions: usize,
    /// Seconds of padding per draft forward.
    #[serde(default = "defaults::draft_delay")]
    pub draft_delay: f64,
    /// Seconds of padding per target forward.
    #[serde(default = "defaults::target_delay")]
    pub target_delay: f64,
}

mod defaults {
    use super::{DEFAULT_DRAFT_DELAY, DEFAULT_TARGET_DELAY};
    use crate::decode::GenerationConfig;

    pub fn k() -> usize {
        GenerationConfig::default().k
    }
    pub fn max_new_tokens() -> usize {
        GenerationConfig::default().max_new_tokens
    }
    pub fn temperature() -> f64 {
        GenerationConfig::default().temperature
    }
    pub fn top_p() -> f64 {
        GenerationConfig::default().top_p
    }
    pub fn repetitions() -> usize {
        1
    }
    pub fn draft_delay() -> f64 {
        DEFAULT_DRAFT_DELAY.as_secs_f64()
    }
    pub fn target_delay() -> f64 {
        DEFAULT_TARGET_DELAY.as_secs_f64()
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default)]
    scenario: Vec<ScenarioSpec>,
}

pub fn parse_scenarios(text: &str) -> Result<Vec<ScenarioSpec>, BenchError> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| BenchError::Parse(e.to_string()))?;
    for s in &file.scenario {
        s.validate()?;
    }
    Ok(file.scenario)
}

/// Reads and validates a scenario file; model references stay unresolved.
pub fn read_scenario_file(path: impl AsRef<Path>) -> Result<Vec<ScenarioSpec>, BenchError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenarios(&text)
}

fn delay(secs: f64, what: &str) -> Result<Duration, BenchError> {
    Duration::try_from_secs_f64(secs)
        .map_err(|_| BenchError::InvalidScenario(format!("{what} must be >= 0, got {secs}")))
}

impl ScenarioSpec {
    pub fn generation_config(&self) -> GenerationConfig {
        GenerationConfig {
            mode: DecodeMode::Speculative,
            k: self.k,
            max_new_tokens: self.max_new_tokens,
            temperature: self.temperature,
            top_p: self.top_p,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| BenchError::InvalidScenario(format!("{}: {m}", self.id));
        if self.repetitions == 0 {
            return Err(bad("repetitions must be at least 1".into()));
        }
        self.generation_config()
            .validate()
            .map_err(|e| bad(e.to_string()))?;
        delay(self.draft_delay, "draft_delay").map_err(|e| bad(e.to_string()))?;
        delay(self.target_delay, "target_delay").map_err(|e| bad(e.to_string()))?;
        self.target.parse::<ModelRef>().map_err(bad)?;
        self.draft.parse::<ModelRef>().map_err(bad)?;
        Ok(())
    }

    /// Loads both models, resolving relative paths against `base_dir`.
    pub fn load(&self, base_dir: &Path) -> Result<Scenario, BenchError> {
        self.validate()?;
        let resolve = |s: &str| -> Result<AnyModel, BenchError> {
            let r = s
                .parse::<ModelRef>()
                .map_err(BenchError::InvalidScenario)?
                .relative_to(base_dir);
            Ok(load_model(&r)?)
        };
        Ok(Scenario {
            id: self.id.clone(),
            target: resolve(&self.target)?,
            draft: resolve(&self.draft)?,
            prompt: self.prompt.clone().into_bytes(),
            cfg: self.generation_config(),
            repetitions: self.repetitions,
            draft_delay: delay(self.draft_delay, "draft_delay")?,
            target_delay: delay(self.target_delay, "target_delay")?,
        })
    }
}

/// Loads every scenario in `path`, with model paths relative to the file.
pub fn load_scenario_file(path: impl AsRef<Path>) -> Result<Vec<Scenario>, BenchError> {
    let path = path.as_ref();
    let base: PathBuf = path.parent().map(Path::to_path_buf).unwrap_or_default();
    read_scenario_file(path)?
        .iter()
        .map(|s| s.load(&base))
        .collect()
}

/// Timings and stats of all repetitions of one mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeMeasurement {
    pub mode: DecodeMode,
    pub tokens_generated: usize,
    pub wall_times: Vec<Duration>,
    pub stats: Vec<GenerationStats>,
}

impl ModeMeasurement {
    pub fn median_seconds(&self) -> f64 {
        median(self.wall_times.iter().map(Duration::as_secs_f64).collect())
    }

    fn totals(&self) -> GenerationStats {
        self.stats
            .iter()
            .fold(GenerationStats::default(), |mut acc, s| {
                acc.draft_forward_calls += s.draft_forward_calls;
                acc.target_forward_calls += s.target_forward_calls;
                acc.tokens_proposed += s.tokens_proposed;
                acc.tokens_accepted += s.tokens_accepted;
                acc.tokens_rejected += s.tokens_rejected;
                acc.bonus_tokens += s.bonus_tokens;
                acc
            })
    }

    /// Accepted over proposed, pooled across repetitions.
    pub fn acceptance_rate(&self) -> Option<f64> {
        self.totals().acceptance_rate()
    }

    /// Accepted over judged drafts, pooled across repetitions.
    pub fn verified_acceptance_rate(&self) -> Option<f64> {
        self.totals().verified_acceptance_rate()
    }

    fn mean_calls(&self, f: impl Fn(&GenerationStats) -> usize) -> usize {
        let n = self.stats.len().max(1);
        (self.stats.iter().map(f).sum::<usize>() + n / 2) / n
    }

    pub fn to_record(&self, scenario_id: &str) -> BenchRecord {
        let median = self.median_seconds();
        BenchRecord {
            scenario_id: scenario_id.to_string(),
            mode: self.mode,
            wall_time_median: median,
            tokens_generated: self.tokens_generated,
            tokens_per_second: self.tokens_generated as f64 / median,
            acceptance_rate: match self.mode {
                DecodeMode::Autoregressive => None,
                DecodeMode::Speculative => Some(self.acceptance_rate().unwrap_or(0.0)),
            },
            target_calls: self.mean_calls(|s| s.target_forward_calls),
            draft_calls: self.mean_calls(|s| s.draft_forward_calls),
            speedup_vs_autoregressive: None,
        }
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    assert!(!xs.is_empty(), "median of no samples");
    xs.sort_by(f64::total_cmp);
    let mid = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[mid]
    } else {
        (xs[mid - 1] + xs[mid]) / 2.0
    }
}

/// Runs one mode `repetitions` times with seeds `seed, seed + 1, ...`.
pub fn measure<T: LanguageModel, D: LanguageModel>(
    scenario: &Scenario<T, D>,
    mode: DecodeMode,
) -> Result<ModeMeasurement, BenchError> {
    let target = Delayed::new(&scenario.target, scenario.target_delay);
    let draft = Delayed::new(&scenario.draft, scenario.draft_delay);
    let prompt = tokenize(&scenario.prompt);
    let mut out = ModeMeasurement {
        mode,
        tokens_generated: 0,
        wall_times: Vec::with_capacity(scenario.repetitions),
        stats: Vec::with_capacity(scenario.repetitions),
    };
    for rep in 0..scenario.repetitions as u64 {
        let cfg = GenerationConfig {
            mode,
            seed: scenario.cfg.seed.wrapping_add(rep),
            ..scenario.cfg.clone()
        };
        let mut rng = SplitMix64::new(cfg.seed);
        let result = match mode {
            DecodeMode::Autoregressive => autoregressive_generate(&target, &prompt, &cfg, &mut rng),
            DecodeMode::Speculative => {
                speculative_generate(&target, &draft, &prompt, &cfg, &mut rng)
            }
        }
        .map_err(|source| BenchError::Generation {
            scenario: scenario.id.clone(),
            source,
        })?;
        out.tokens_generated = result.tokens.len();
        out.wall_times.push(result.stats.wall_time_total);
        out.stats.push(result.stats);
    }
    Ok(out)
}

/// The autoregressive and speculative records of one scenario, speedup
/// filled on the speculative one.
pub fn build_records(
    scenario_id: &str,
    autoregressive: &ModeMeasurement,
    speculative: &ModeMeasurement,
) -> Vec<BenchRecord> {
    let ar = autoregressive.to_record(scenario_id);
    let mut spec = speculative.to_record(scenario_id);
    spec.speedup_vs_autoregressive = Some(ar.wall_time_median / spec.wall_time_median);
    vec![ar, spec]
}

/// Autoregressive first, then speculative, strictly sequential.
pub fn run_scenario<T: LanguageModel, D: LanguageModel>(
    scenario: &Scenario<T, D>,
) -> Result<Vec<BenchRecord>, BenchError> {
    let ar = measure(scenario, DecodeMode::Autoregressive)?;
    let spec = measure(scenario, DecodeMode::Speculative)?;
    Ok(build_records(&scenario.id, &ar, &spec))
}
