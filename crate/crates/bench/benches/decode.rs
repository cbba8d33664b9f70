use criterion::{black_box, criterion_group, criterion_main, Criterion};

use specdec_bench::{bigram_draft, draft_model, target_model};
use specdec_core::decode::{residual_distribution, softmax_with_temperature, top_p_filter};
use specdec_core::{
    autoregressive_generate, speculative_generate, tokenize, GenerationConfig, SplitMix64,
};

fn sampling(c: &mut Criterion) {
    let mut rng = SplitMix64::new(0);
    let logits: Vec<f32> = (0..257).map(|_| rng.next_uniform() as f32 * 4.0).collect();
    let shifted: Vec<f32> = logits.iter().rev().copied().collect();
    c.bench_function("softmax_t0.8", |b| {
        b.iter(|| softmax_with_temperature(black_box(&logits), 0.8).unwrap())
    });
    let q = softmax_with_temperature(&logits, 0.8).unwrap();
    let p = softmax_with_temperature(&shifted, 0.8).unwrap();
    c.bench_function("top_p_0.9", |b| {
        b.iter(|| top_p_filter(black_box(&q), 0.9).unwrap())
    });
    c.bench_function("residual", |b| {
        b.iter(|| residual_distribution(black_box(&q), &p))
    });
}

fn generation(c: &mut Criterion) {
    let target = target_model();
    let draft = draft_model();
    let bigram = bigram_draft();
    let prompt = tokenize(b"Alan Turing theorized that computers would one day become");
    let cfg = GenerationConfig {
        max_new_tokens: 40,
        ..GenerationConfig::default()
    };

    let mut group = c.benchmark_group("generate_n40");
    group.sample_size(10);
    group.bench_function("autoregressive", |b| {
        b.iter(|| autoregressive_generate(&target, &prompt, &cfg, &mut SplitMix64::new(0)).unwrap())
    });
    group.bench_function("speculative_tiny_draft", |b| {
        b.iter(|| {
            speculative_generate(&target, &draft, &prompt, &cfg, &mut SplitMix64::new(0)).unwrap()
        })
    });
    group.bench_function("speculative_bigram_draft", |b| {
        b.iter(|| {
            speculative_generate(&target, &bigram, &prompt, &cfg, &mut SplitMix64::new(0)).unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, sampling, generation);
criterion_main!(benches);
