//! A small pre-LayerNorm decoder-only transformer with a real KV cache.
//!
//! Every position is computed with the same sequence of f32 operations no
//! matter how tokens are grouped into forward calls, so batched verification
//! and token-by-token decoding produce bit-identical logits.

use crate::decode::rng::SplitMix64;
use crate::kv_cache::{CacheShape, KvCache};

use super::{check_forward, LanguageModel, Logits, ModelError, TokenId, VOCAB_SIZE};

const LN_EPS: f32 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TinyTransformerConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_context: usize,
}

impl TinyTransformerConfig {
    pub fn new(
        d_model: usize,
        n_layers: usize,
        n_heads: usize,
        d_ff: usize,
        max_context: usize,
    ) -> Self {
        Self {
            vocab_size: VOCAB_SIZE,
            d_model,
            n_layers,
            n_heads,
            d_ff,
            max_context,
        }
    }

    /// 4 layers, d_model 128, 4 heads, d_ff 512.
    pub fn default_target() -> Self {
        Self::new(128, 4, 4, 512, 512)
    }

    /// 2 layers, d_model 32, 2 heads, d_ff 128.
    pub fn default_draft() -> Self {
        Self::new(32, 2, 2, 128, 512)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fields = [
            ("vocab_size", self.vocab_size),
            ("d_model", self.d_model),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
            ("max_context", self.max_context),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::InvalidConfig(format!(
                "{name} must be at least 1"
            )));
        }
        if self.vocab_size != VOCAB_SIZE {
            return Err(ModelError::InvalidConfig(format!(
                "vocab_size must be {VOCAB_SIZE}, got {}",
                self.vocab_size
            )));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(ModelError::InvalidConfig(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Total number of weight elements.
    pub fn parameter_count(&self) -> usize {
        tensor_layout(self).iter().map(TensorKind::len).sum()
    }

    /// Config fields in serialization order.
    pub fn fields(&self) -> [usize; 6] {
        [
            self.vocab_size,
            self.d_model,
            self.n_layers,
            self.n_heads,
            self.d_ff,
            self.max_context,
        ]
    }

    pub fn from_fields(f: [usize; 6]) -> Self {
        Self {
            vocab_size: f[0],
            d_model: f[1],
            n_layers: f[2],
            n_heads: f[3],
            d_ff: f[4],
            max_context: f[5],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TensorKind {
    /// Row-major `(rows, cols)`; `rows` is the input dimension.
    Matrix {
        rows: usize,
        cols: usize,
    },
    Gain(usize),
    Bias(usize),
}

impl TensorKind {
    fn len(&self) -> usize {
        match *self {
            TensorKind::Matrix { rows, cols } => rows * cols,
            TensorKind::Gain(n) | TensorKind::Bias(n) => n,
        }
    }
}

/// Canonical tensor order: embedding; per layer Wq, Wk, Wv, Wo, W1, W2,
/// LN1 gain/bias, LN2 gain/bias; final LN gain/bias; unembedding.
fn tensor_layout(cfg: &TinyTransformerConfig) -> Vec<TensorKind> {
    let (v, d, f) = (cfg.vocab_size, cfg.d_model, cfg.d_ff);
    let square = TensorKind::Matrix { rows: d, cols: d };
    let mut out = vec![TensorKind::Matrix { rows: v, cols: d }];
    for _ in 0..cfg.n_layers {
        out.extend([
            square,
            square,
            square,
            square,
            TensorKind::Matrix { rows: d, cols: f },
            TensorKind::Matrix { rows: f, cols: d },
            TensorKind::Gain(d),
            TensorKind::Bias(d),
            TensorKind::Gain(d),
            TensorKind::Bias(d),
        ]);
    }
    out.extend([
        TensorKind::Gain(d),
        TensorKind::Bias(d),
        TensorKind::Matrix { rows: d, cols: v },
    ]);
    out
}

#[derive(Debug, Clone, PartialEq)]
struct Block {
    wq: Vec<f32>,
    wk: Vec<f32>,
    wv: Vec<f32>,
    wo: Vec<f32>,
    w1: Vec<f32>,
    w2: Vec<f32>,
    ln1_gain: Vec<f32>,
    ln1_bias: Vec<f32>,
    ln2_gain: Vec<f32>,
    ln2_bias: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TinyTransformer {
    config: TinyTransformerConfig,
    embedding: Vec<f32>,
    blocks: Vec<Block>,
    final_gain: Vec<f32>,
    final_bias: Vec<f32>,
    unembedding: Vec<f32>,
}

impl TinyTransformer {
    /// Draws every matrix element from one SplitMix64 stream as
    /// `(u - 0.5) * 2 / sqrt(fan_in)`, in canonical tensor order, row-major.
    /// LayerNorm gains start at 1 and biases at 0 without consuming draws.
    pub fn init(config: TinyTransformerConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = SplitMix64::new(seed);
        let tensors = tensor_layout(&config)
            .into_iter()
            .map(|kind| match kind {
                TensorKind::Matrix { rows, cols } => {
                    let scale = 2.0 / (rows as f64).sqrt();
                    (0..rows * cols)
                        .map(|_| ((rng.next_uniform() - 0.5) * scale) as f32)
                        .collect()
                }
                TensorKind::Gain(n) => vec![1.0; n],
                TensorKind::Bias(n) => vec![0.0; n],
            })
            .collect();
        Self::from_tensors(config, tensors)
    }

    /// Every matrix zero, LayerNorm gains 1, biases 0.
    pub fn zeroed(config: TinyTransformerConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let tensors = tensor_layout(&config)
            .into_iter()
            .map(|kind| match kind {
                TensorKind::Gain(n) => vec![1.0; n],
                other => vec![0.0; other.len()],
            })
            .collect();
        Self::from_tensors(config, tensors)
    }

    /// Builds a model from the concatenation of all tensors in canonical
    /// order.
    pub fn from_flat(config: TinyTransformerConfig, flat: &[f32]) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = tensor_layout(&config);
        let expected: usize = layout.iter().map(TensorKind::len).sum();
        if flat.len() != expected {
            return Err(ModelError::InvalidConfig(format!(
                "expected {expected} weights, got {}",
                flat.len()
            )));
        }
        let mut rest = flat;
        let tensors = layout
            .iter()
            .map(|kind| {
                let (head, tail) = rest.split_at(kind.len());
                rest = tail;
                head.to_vec()
            })
            .collect();
        Self::from_tensors(config, tensors)
    }

    fn from_tensors(
        config: TinyTransformerConfig,
        tensors: Vec<Vec<f32>>,
    ) -> Result<Self, ModelError> {
        let mut it = tensors.into_iter();
        let mut next = || it.next().expect("layout length");
        let embedding = next();
        let blocks = (0..config.n_layers)
            .map(|_| Block {
                wq: next(),
                wk: next(),
                wv: next(),
                wo: next(),
                w1: next(),
                w2: next(),
                ln1_gain: next(),
                ln1_bias: next(),
                ln2_gain: next(),
                ln2_bias: next(),
            })
            .collect();
        Ok(Self {
            config,
            embedding,
            blocks,
            final_gain: next(),
            final_bias: next(),
            unembedding: next(),
        })
    }

    pub fn config(&self) -> &TinyTransformerConfig {
        &self.config
    }

    /// All tensors in canonical order.
    pub fn tensors(&self) -> Vec<&[f32]> {
        let mut out: Vec<&[f32]> = vec![&self.embedding];
        for b in &self.blocks {
            out.extend([
                &b.wq[..],
                &b.wk,
                &b.wv,
                &b.wo,
                &b.w1,
                &b.w2,
                &b.ln1_gain,
                &b.ln1_bias,
                &b.ln2_gain,
                &b.ln2_bias,
            ]);
        }
        out.extend([&self.final_gain[..], &self.final_bias, &self.unembedding]);
        out
    }

    /// Bitwise comparison of config and every weight.
    pub fn bit_eq(&self, other: &TinyTransformer) -> bool {
        self.config == other.config
            && self.tensors().iter().zip(other.tensors()).all(|(a, b)| {
                a.iter()
                    .map(|x| x.to_bits())
                    .eq(b.iter().map(|x| x.to_bits()))
            })
    }

    fn forward_position(&self, cache: &mut KvCache, token: TokenId, s: &mut Scratch) -> Vec<f32> {
        let cfg = &self.config;
        let d = cfg.d_model;
        let pos = cache.len();

        s.hidden
            .copy_from_slice(&self.embedding[token.index() * d..(token.index() + 1) * d]);
        add_positional_encoding(&mut s.hidden, pos);

        for (layer, b) in self.blocks.iter().enumerate() {
            layer_norm(&s.hidden, &b.ln1_gain, &b.ln1_bias, &mut s.normed);
            vec_mat(&s.normed, &b.wq, d, &mut s.q);
            vec_mat(&s.normed, &b.wk, d, &mut s.k);
            vec_mat(&s.normed, &b.wv, d, &mut s.v);
            cache.write_next(layer, &s.k, &s.v);
            self.attend(cache, layer, pos, s);
            vec_mat(&s.ctx, &b.wo, d, &mut s.proj);
            add_assign(&mut s.hidden, &s.proj);

            layer_norm(&s.hidden, &b.ln2_gain, &b.ln2_bias, &mut s.normed);
            vec_mat(&s.normed, &b.w1, cfg.d_ff, &mut s.ff);
            s.ff.iter_mut().for_each(|x| *x = x.max(0.0));
            vec_mat(&s.ff, &b.w2, d, &mut s.proj);
            add_assign(&mut s.hidden, &s.proj);
        }

        layer_norm(&s.hidden, &self.final_gain, &self.final_bias, &mut s.normed);
        let mut logits = vec![0.0; cfg.vocab_size];
        vec_mat(&s.normed, &self.unembedding, cfg.vocab_size, &mut logits);
        logits
    }

    /// Causal attention of the query at `pos` over cached positions `0..=pos`.
    fn attend(&self, cache: &KvCache, layer: usize, pos: usize, s: &mut Scratch) {
        let hd = self.config.head_dim();
        let n_heads = self.config.n_heads;
        let scale = 1.0 / (hd as f32).sqrt();
        let keys = cache.keys(layer);
        let values = cache.values(layer);
        s.scores.resize(pos + 1, 0.0);
        s.ctx.fill(0.0);

        for h in 0..n_heads {
            let q = &s.q[h * hd..(h + 1) * hd];
            let mut max = f32::NEG_INFINITY;
            for t in 0..=pos {
                let off = (t * n_heads + h) * hd;
                let score = dot(q, &keys[off..off + hd]) * scale;
                s.scores[t] = score;
                max = max.max(score);
            }
            let mut sum = 0.0f32;
            for sc in s.scores.iter_mut() {
                *sc = (*sc - max).exp();
                sum += *sc;
            }
            let ctx = &mut s.ctx[h * hd..(h + 1) * hd];
            for t in 0..=pos {
                let w = s.scores[t] / sum;
                let off = (t * n_heads + h) * hd;
                for (c, v) in ctx.iter_mut().zip(&values[off..off + hd]) {
                    *c += w * v;
                }
            }
        }
    }
}

impl LanguageModel for TinyTransformer {
    fn cache_shape(&self) -> CacheShape {
        CacheShape::new(
            self.config.n_layers,
            self.config.n_heads,
            self.config.head_dim(),
            self.config.max_context,
        )
    }

    fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    fn forward(&self, cache: &mut KvCache, tokens: &[TokenId]) -> Result<Logits, ModelError> {
        check_forward(self.cache_shape(), self.config.vocab_size, cache, tokens)?;
        let mut scratch = Scratch::new(&self.config);
        let mut rows = Vec::with_capacity(tokens.len());
        for &tok in tokens {
            rows.push(self.forward_position(cache, tok, &mut scratch));
            cache.commit_position()?;
        }
        Ok(rows)
    }
}

struct Scratch {
    hidden: Vec<f32>,
    normed: Vec<f32>,
    q: Vec<f32>,
    k: Vec<f32>,
    v: Vec<f32>,
    ctx: Vec<f32>,
    proj: Vec<f32>,
    ff: Vec<f32>,
    scores: Vec<f32>,
}

impl Scratch {
    fn new(cfg: &TinyTransformerConfig) -> Self {
        let d = cfg.d_model;
        Self {
            hidden: vec![0.0; d],
            normed: vec![0.0; d],
            q: vec![0.0; d],
            k: vec![0.0; d],
            v: vec![0.0; d],
            ctx: vec![0.0; d],
            proj: vec![0.0; d],
            ff: vec![0.0; cfg.d_ff],
            scores: Vec::new(),
        }
    }
}

/// `out = x · W` with `W` row-major `(x.len(), cols)`.
fn vec_mat(x: &[f32], w: &[f32], cols: usize, out: &mut [f32]) {
    debug_assert_eq!(w.len(), x.len() * cols);
    out.fill(0.0);
    for (xi, row) in x.iter().zip(w.chunks_exact(cols)) {
        for (o, wij) in out.iter_mut().zip(row) {
            *o += xi * wij;
        }
    }
}

fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add_assign(acc: &mut [f32], x: &[f32]) {
    acc.iter_mut().zip(x).for_each(|(a, b)| *a += b);
}

fn layer_norm(x: &[f32], gain: &[f32], bias: &[f32], out: &mut [f32]) {
    let n = x.len() as f32;
    let mean = x.iter().sum::<f32>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n;
    let inv = 1.0 / (var + LN_EPS).sqrt();
    for i in 0..x.len() {
        out[i] = (x[i] - mean) * inv * gain[i] + bias[i];
    }
}

/// Sinusoidal encoding: even dims `sin(pos / 10000^(i/d))`, odd dims the
/// matching `cos`. Evaluated in f64 then rounded.
fn add_positional_encoding(x: &mut [f32], pos: usize) {
    let d = x.len() as f64;
    for (i, v) in x.iter_mut().enumerate() {
        let pair = (i - i % 2) as f64;
        let angle = pos as f64 / 10000f64.powf(pair / d);
        let pe = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        *v += pe as f32;
    }
}
