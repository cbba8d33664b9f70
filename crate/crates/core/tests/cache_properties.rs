use proptest::prelude::*;

use specdec_core::{
    BigramModel, KvCache, LanguageModel, TinyTransformer, TinyTransformerConfig, TokenId,
};

fn model(seed: u64) -> TinyTransformer {
    TinyTransformer::init(TinyTransformerConfig::new(16, 2, 2, 32, 96), seed).unwrap()
}

fn tokens() -> impl Strategy<Value = Vec<TokenId>> {
    proptest::collection::vec(0u32..257, 2..40)
        .prop_map(|v| v.into_iter().map(TokenId::new).collect())
}

fn run(m: &TinyTransformer, seq: &[TokenId]) -> (KvCache, Vec<Vec<f32>>) {
    let mut cache = m.new_cache();
    let rows = m.forward(&mut cache, seq).unwrap();
    (cache, rows)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn chunked_forward_matches_whole(seq in tokens(), cuts in proptest::collection::vec(1usize..6, 1..10), seed in 0u64..4) {
        let m = model(seed);
        let (whole_cache, whole) = run(&m, &seq);

        let mut cache = m.new_cache();
        let mut rows = Vec::new();
        let mut start = 0;
        for c in cuts.iter().cycle() {
            if start == seq.len() {
                break;
            }
            let end = (start + c).min(seq.len());
            rows.extend(m.forward(&mut cache, &seq[start..end]).unwrap());
            start = end;
        }
        prop_assert_eq!(rows.len(), seq.len());
        for (a, b) in rows.iter().zip(&whole) {
            prop_assert_eq!(a.len(), 257);
            for (x, y) in a.iter().zip(b) {
                prop_assert!((x - y).abs() <= 1e-5);
            }
        }
        prop_assert!(cache.approx_eq(&whole_cache, 1e-6));
    }

    #[test]
    fn truncate_then_replay_is_bit_identical(seq in tokens(), k_frac in 0.0..1.0f64, j_frac in 0.0..=1.0f64) {
        let m = model(1);
        let k = 1 + ((seq.len() - 1) as f64 * k_frac) as usize;
        let j = (k as f64 * j_frac) as usize;
        let (direct, _) = run(&m, &seq[..k]);

        let (mut cache, _) = run(&m, &seq[..k]);
        cache.truncate(j).unwrap();
        prop_assert_eq!(cache.len(), j);
        if j < k {
            m.forward(&mut cache, &seq[j..k]).unwrap();
        }
        prop_assert!(cache.bit_eq(&direct));
    }

    #[test]
    fn append_grows_by_input_length_and_keeps_prefix(seq in tokens(), split in 1usize..39) {
        let m = model(2);
        let split = split.min(seq.len() - 1);
        let (mut cache, _) = run(&m, &seq[..split]);
        let before = cache.clone();
        m.forward(&mut cache, &seq[split..]).unwrap();
        prop_assert_eq!(cache.len(), seq.len());

        let mut prefix = cache.clone();
        prefix.truncate(split).unwrap();
        prop_assert!(prefix.bit_eq(&before));
    }

    #[test]
    fn bigram_rows_ignore_chunking(seq in tokens()) {
        let m = BigramModel::train(b"hello there general kenobi", 1.0).unwrap();
        let mut a = m.new_cache();
        let whole = m.forward(&mut a, &seq).unwrap();
        let mut b = m.new_cache();
        for (i, t) in seq.iter().enumerate() {
            let row = m.forward(&mut b, std::slice::from_ref(t)).unwrap();
            prop_assert_eq!(&row[0], &whole[i]);
        }
        prop_assert!(a.bit_eq(&b));
    }
}

#[test]
fn repeated_forward_is_deterministic() {
    let m = model(3);
    let seq: Vec<TokenId> = b"determinism"
        .iter()
        .map(|&b| TokenId::from_byte(b))
        .collect();
    let (c1, r1) = run(&m, &seq);
    let (c2, r2) = run(&m, &seq);
    assert!(c1.bit_eq(&c2));
    for (a, b) in r1.iter().zip(&r2) {
        assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn truncated_replay_of_two_tokens_matches() {
    let m = model(4);
    let seq: Vec<TokenId> = b"hello".iter().map(|&b| TokenId::from_byte(b)).collect();
    let (direct, _) = run(&m, &seq);
    let (mut c, _) = run(&m, &seq);
    c.truncate(3).unwrap();
    m.forward(&mut c, &seq[3..]).unwrap();
    assert!(c.approx_eq(&direct, 0.0));
}
