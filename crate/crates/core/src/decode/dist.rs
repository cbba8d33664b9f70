//! Probability vectors, logit warping, sampling and the acceptance math of
//! speculative decoding. All arithmetic here is f64.

use crate::model::TokenId;

use super::rng::SplitMix64;
use super::DecodeError;

const SUM_TOLERANCE: f64 = 1e-9;
const DEGENERATE_SUM: f64 = 1.0 - 1e-6;
/// Residual mass below this is treated as "draft equals target".
const RESIDUAL_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbDist(Vec<f64>);

impl ProbDist {
    /// Validates non-negativity and a total of 1 within 1e-9.
    pub fn new(probs: Vec<f64>) -> Result<Self, DecodeError> {
        if probs.is_empty() {
            return Err(DecodeError::InvalidDistribution("empty".into()));
        }
        if let Some((i, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !(p.is_finite() && **p >= 0.0))
        {
            return Err(DecodeError::InvalidDistribution(format!(
                "entry {i} is {p}"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(DecodeError::InvalidDistribution(format!("sums to {sum}")));
        }
        Ok(Self(probs))
    }

    /// Normalizes non-negative weights with a positive total.
    pub fn from_weights(mut weights: Vec<f64>) -> Result<Self, DecodeError> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(DecodeError::InvalidDistribution(format!(
                "weights sum to {sum}"
            )));
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        Self::new(weights)
    }

    pub fn one_hot(len: usize, index: usize) -> Self {
        let mut v = vec![0.0; len];
        v[index] = 1.0;
        Self(v)
    }

    pub fn uniform(len: usize) -> Self {
        Self(vec![1.0 / len as f64; len])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn prob(&self, token: TokenId) -> f64 {
        self.0[token.index()]
    }

    /// Highest-probability token; ties go to the lowest id.
    pub fn argmax(&self) -> TokenId {
        TokenId::new(argmax(&self.0) as u32)
    }

    /// Half the L1 distance.
    pub fn total_variation(&self, other: &ProbDist) -> f64 {
        0.5 * self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

fn argmax<T: PartialOrd + Copy>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Temperature softmax in f64. Temperature 0 is greedy: a one-hot at the
/// argmax, lowest id on ties.
pub fn softmax_with_temperature(logits: &[f32], temperature: f64) -> Result<ProbDist, DecodeError> {
    if !(temperature >= 0.0 && temperature.is_finite()) {
        return Err(DecodeError::InvalidTemperature(temperature));
    }
    if logits.is_empty() {
        return Err(DecodeError::InvalidDistribution("empty logits".into()));
    }
    if let Some(i) = logits.iter().position(|l| !l.is_finite()) {
        return Err(DecodeError::NonFiniteLogit { index: i });
    }
    if temperature == 0.0 {
        return Ok(ProbDist::one_hot(logits.len(), argmax(logits)));
    }
    let max = logits
        .iter()
        .fold(f64::NEG_INFINITY, |m, &l| m.max(l as f64));
    let exps: Vec<f64> = logits
        .iter()
        .map(|&l| ((l as f64 - max) / temperature).exp())
        .collect();
    let sum: f64 = exps.iter().sum();
    Ok(ProbDist(exps.into_iter().map(|e| e / sum).collect()))
}

/// Nucleus filter: keeps the shortest probability-descending prefix (ties by
/// ascending id) whose mass reaches `top_p`, then renormalizes.
pub fn top_p_filter(dist: &ProbDist, top_p: f64) -> Result<ProbDist, DecodeError> {
    if !(top_p > 0.0 && top_p <= 1.0) {
        return Err(DecodeError::InvalidTopP(top_p));
    }
    if top_p == 1.0 {
        return Ok(dist.clone());
    }
    let probs = dist.probs();
    let mut order: Vec<usize> = (0..probs.len()).collect();
    // stable sort keeps ascending ids among equal probabilities
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));

    let mut kept = vec![0.0; probs.len()];
    let mut mass = 0.0;
    for &i in &order {
        kept[i] = probs[i];
        mass += probs[i];
        if mass >= top_p {
            break;
        }
    }
    Ok(ProbDist(kept.into_iter().map(|p| p / mass).collect()))
}

/// Inverse-CDF lookup: the smallest id whose cumulative mass exceeds `u`.
pub fn sample_with_uniform(dist: &ProbDist, u: f64) -> Result<TokenId, DecodeError> {
    let probs = dist.probs();
    let total: f64 = probs.iter().sum();
    if total < DEGENERATE_SUM {
        return Err(DecodeError::DegenerateDistribution { sum: total });
    }
    let mut cum = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        cum += p;
        if cum > u {
            return Ok(TokenId::new(i as u32));
        }
    }
    // u landed in the rounding gap below 1: take the last supported token
    let last = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    Ok(TokenId::new(last as u32))
}

pub fn sample_from_dist(dist: &ProbDist, rng: &mut SplitMix64) -> Result<TokenId, DecodeError> {
    sample_with_uniform(dist, rng.next_uniform())
}

/// `min(1, q[token] / p[token])`.
pub fn accept_probability(
    q_target: &ProbDist,
    p_draft: &ProbDist,
    token: TokenId,
) -> Result<f64, DecodeError> {
    let p = p_draft.prob(token);
    if p <= 0.0 {
        return Err(DecodeError::InvalidProposal { token });
    }
    Ok((q_target.prob(token) / p).min(1.0))
}

/// `normalize(max(0, q - p))`, or `q` itself when the residual mass is
/// below 1e-12.
pub fn residual_distribution(q_target: &ProbDist, p_draft: &ProbDist) -> ProbDist {
    assert_eq!(
        q_target.len(),
        p_draft.len(),
        "residual of distributions over different vocabularies"
    );
    let residual: Vec<f64> = q_target
        .probs()
        .iter()
        .zip(p_draft.probs())
        .map(|(q, p)| (q - p).max(0.0))
        .collect();
    let mass: f64 = residual.iter().sum();
    if mass < RESIDUAL_FLOOR {
        return q_target.clone();
    }
    ProbDist(residual.into_iter().map(|r| r / mass).collect())
}

/// Exact probability that one speculative step with a single draft token
/// emits each token: accept the draft with [`accept_probability`], otherwise
/// emit from [`residual_distribution`], integrated analytically over the
/// draft draw and the uniform.
pub fn one_step_emission(q_target: &ProbDist, p_draft: &ProbDist) -> Result<Vec<f64>, DecodeError> {
    let residual = residual_distribution(q_target, p_draft);
    let mut emitted = vec![0.0; q_target.len()];
    let mut reject_mass = 0.0;
    for (i, &p) in p_draft.probs().iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let a = accept_probability(q_target, p_draft, TokenId::new(i as u32))?;
        emitted[i] += p * a;
        reject_mass += p * (1.0 - a);
    }
    for (e, r) in emitted.iter_mut().zip(residual.probs()) {
        *e += reject_mass * r;
    }
    Ok(emitted)
}

/// Temperature and nucleus settings applied identically to draft and target
/// rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Warp {
    pub temperature: f64,
    pub top_p: f64,
}

impl Warp {
    pub fn new(temperature: f64, top_p: f64) -> Result<Self, DecodeError> {
        if !(temperature >= 0.0 && temperature.is_finite()) {
            return Err(DecodeError::InvalidTemperature(temperature));
        }
        if !(top_p > 0.0 && top_p <= 1.0) {
            return Err(DecodeError::InvalidTopP(top_p));
        }
        Ok(Self { temperature, top_p })
    }

    pub fn is_greedy(&self) -> bool {
        self.temperature == 0.0
    }

    pub fn apply(&self, logits: &[f32]) -> Result<ProbDist, DecodeError> {
        top_p_filter(
            &softmax_with_temperature(logits, self.temperature)?,
            self.top_p,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dist(v: &[f64]) -> ProbDist {
        ProbDist::new(v.to_vec()).unwrap()
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn prob_dist_validation() {
        assert!(ProbDist::new(vec![0.5, 0.5]).is_ok());
        assert!(ProbDist::new(vec![0.5, 0.6]).is_err());
        assert!(ProbDist::new(vec![-0.1, 1.1]).is_err());
        assert!(ProbDist::new(vec![f64::NAN, 1.0]).is_err());
        assert!(ProbDist::new(vec![]).is_err());
        assert!(ProbDist::from_weights(vec![0.0, 0.0]).is_err());
        assert_eq!(
            ProbDist::from_weights(vec![1.0, 3.0]).unwrap().probs(),
            &[0.25, 0.75]
        );
    }

    #[test]
    fn softmax_equal_logits_is_uniform() {
        let d = softmax_with_temperature(&[0.3; 257], 1.0).unwrap();
        assert!(d.probs().iter().all(|&p| (p - 1.0 / 257.0).abs() < 1e-15));
    }

    #[test]
    fn softmax_ln2_slice() {
        let d = softmax_with_temperature(&[std::f32::consts::LN_2, 0.0], 1.0).unwrap();
        // ln 2 rounded to f32 is within 3e-8 of the real value
        assert_close(d.probs(), &[2.0 / 3.0, 1.0 / 3.0], 1e-7);
    }

    #[test]
    fn softmax_temperature_sharpens() {
        let warm = softmax_with_temperature(&[1.0, 0.0], 1.0).unwrap();
        let cold = softmax_with_temperature(&[1.0, 0.0], 0.5).unwrap();
        assert!(cold.probs()[0] > warm.probs()[0]);
        let expected = 1.0 / (1.0 + (-2.0f64).exp());
        assert!((cold.probs()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn greedy_ties_pick_lowest_id() {
        let d = softmax_with_temperature(&[0.0, 2.0, 1.0, 2.0], 0.0).unwrap();
        assert_eq!(d.probs(), &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(d.argmax(), TokenId::new(1));
    }

    #[test]
    fn softmax_rejects_bad_input() {
        assert!(matches!(
            softmax_with_temperature(&[0.0, f32::NAN], 1.0),
            Err(DecodeError::NonFiniteLogit { index: 1 })
        ));
        assert!(matches!(
            softmax_with_temperature(&[0.0, f32::INFINITY], 0.0),
            Err(DecodeError::NonFiniteLogit { index: 1 })
        ));
        assert!(softmax_with_temperature(&[0.0], -1.0).is_err());
    }

    #[test]
    fn top_p_keeps_crossing_token() {
        let out = top_p_filter(&dist(&[0.5, 0.3, 0.2]), 0.7).unwrap();
        assert_close(out.probs(), &[0.625, 0.375, 0.0], 1e-15);
    }

    #[test]
    fn top_p_identity_cases() {
        let d = dist(&[0.1, 0.2, 0.7]);
        assert_eq!(top_p_filter(&d, 1.0).unwrap(), d);
        let hot = ProbDist::one_hot(5, 3);
        assert_eq!(top_p_filter(&hot, 0.01).unwrap(), hot);
    }

    #[test]
    fn top_p_ties_break_by_id() {
        let out = top_p_filter(&dist(&[0.25, 0.25, 0.25, 0.25]), 0.5).unwrap();
        assert_eq!(out.probs(), &[0.5, 0.5, 0.0, 0.0]);
        let out = top_p_filter(&dist(&[0.2, 0.4, 0.4]), 0.3).unwrap();
        assert_eq!(out.probs(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn top_p_range_checked() {
        let d = dist(&[1.0]);
        assert!(top_p_filter(&d, 0.0).is_err());
        assert!(top_p_filter(&d, 1.5).is_err());
        assert!(top_p_filter(&d, f64::NAN).is_err());
    }

    #[test]
    fn inverse_cdf_sampling() {
        let hot = ProbDist::one_hot(257, 7);
        for u in [0.0, 0.3, 0.999_999] {
            assert_eq!(sample_with_uniform(&hot, u).unwrap(), TokenId::new(7));
        }
        assert_eq!(
            sample_with_uniform(&ProbDist::uniform(257), 0.0).unwrap(),
            TokenId::new(0)
        );
        assert_eq!(
            sample_with_uniform(&dist(&[0.25, 0.75]), 0.5).unwrap(),
            TokenId::new(1)
        );
        // cumulative must strictly exceed u
        assert_eq!(
            sample_with_uniform(&dist(&[0.25, 0.75]), 0.25).unwrap(),
            TokenId::new(1)
        );
        // zero-probability tail is never chosen from the rounding gap
        assert_eq!(
            sample_with_uniform(&dist(&[0.5, 0.5, 0.0]), 1.0).unwrap(),
            TokenId::new(1)
        );
    }

    #[test]
    fn sampling_rejects_degenerate() {
        let bad = ProbDist(vec![0.2, 0.2]);
        assert!(matches!(
            sample_with_uniform(&bad, 0.1),
            Err(DecodeError::DegenerateDistribution { .. })
        ));
    }

    #[test]
    fn sample_uses_one_draw() {
        let mut a = SplitMix64::new(3);
        let mut b = SplitMix64::new(3);
        let d = ProbDist::uniform(4);
        let t = sample_from_dist(&d, &mut a).unwrap();
        assert_eq!(t, sample_with_uniform(&d, b.next_uniform()).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn acceptance_ratio() {
        let t = TokenId::new(0);
        let q = dist(&[0.2, 0.8]);
        assert_eq!(accept_probability(&q, &q, t).unwrap(), 1.0);
        assert_eq!(accept_probability(&q, &dist(&[0.4, 0.6]), t).unwrap(), 0.5);
        assert_eq!(
            accept_probability(&dist(&[0.9, 0.1]), &dist(&[0.3, 0.7]), t).unwrap(),
            1.0
        );
        assert!(matches!(
            accept_probability(&q, &dist(&[0.0, 1.0]), t),
            Err(DecodeError::InvalidProposal { .. })
        ));
    }

    #[test]
    fn residuals() {
        let r = residual_distribution(&dist(&[0.5, 0.5]), &dist(&[0.9, 0.1]));
        assert_close(r.probs(), &[0.0, 1.0], 1e-15);
        let q = dist(&[0.3, 0.7]);
        assert_eq!(residual_distribution(&q, &q), q);
        let r = residual_distribution(&dist(&[0.6, 0.3, 0.1]), &dist(&[0.2, 0.5, 0.3]));
        assert_close(r.probs(), &[1.0, 0.0, 0.0], 1e-15);
    }

    #[test]
    fn warp_composes() {
        let w = Warp::new(1.0, 0.5).unwrap();
        let d = w.apply(&[2.0, 1.0, 0.0]).unwrap();
        assert_eq!(d.probs()[1..], [0.0, 0.0]);
        assert!(Warp::new(-0.1, 1.0).is_err());
        assert!(Warp::new(1.0, 0.0).is_err());
        assert!(Warp::new(0.0, 1.0).unwrap().is_greedy());
    }

    /// One-step emission marginal written straight from the definition,
    /// without the implementation's helpers: accept x with min(1, q/p), else
    /// draw from normalize(max(0, q - p)).
    fn oracle_marginal(q: &[f64], p: &[f64]) -> Vec<f64> {
        let mut reject_mass = 0.0;
        for y in 0..q.len() {
            if p[y] > 0.0 {
                reject_mass += p[y] * (1.0 - (q[y] / p[y]).min(1.0));
            }
        }
        let res: Vec<f64> = q.iter().zip(p).map(|(a, b)| (a - b).max(0.0)).collect();
        let z: f64 = res.iter().sum();
        (0..q.len())
            .map(|x| {
                let accept = if p[x] > 0.0 {
                    p[x] * (q[x] / p[x]).min(1.0)
                } else {
                    0.0
                };
                let r = if z < 1e-12 { q[x] } else { res[x] / z };
                accept + reject_mass * r
            })
            .collect()
    }

    fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(prop_oneof![1 => Just(0.0), 4 => 0.0..1.0f64], n)
            .prop_filter("positive mass", |w| w.iter().sum::<f64>() > 1e-3)
    }

    proptest! {
        #[test]
        fn top_p_output_is_a_distribution(w in weights(12), p in 0.01..=1.0f64) {
            let d = ProbDist::from_weights(w).unwrap();
            let out = top_p_filter(&d, p).unwrap();
            let s: f64 = out.probs().iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            // every kept token is at least as likely as every dropped one
            let min_kept = d.probs().iter().zip(out.probs())
                .filter(|(_, o)| **o > 0.0).map(|(a, _)| *a).fold(f64::INFINITY, f64::min);
            let max_dropped = d.probs().iter().zip(out.probs())
                .filter(|(_, o)| **o == 0.0).map(|(a, _)| *a).fold(0.0, f64::max);
            prop_assert!(min_kept >= max_dropped);
        }

        #[test]
        fn one_step_marginal_recovers_target(qw in weights(9), pw in weights(9)) {
            let q = ProbDist::from_weights(qw).unwrap();
            let p = ProbDist::from_weights(pw).unwrap();
            let oracle = oracle_marginal(q.probs(), p.probs());
            let implemented = one_step_emission(&q, &p).unwrap();
            for ((o, m), t) in oracle.iter().zip(&implemented).zip(q.probs()) {
                prop_assert!((o - t).abs() < 1e-12);
                prop_assert!((m - o).abs() < 1e-12);
            }
        }
    }
}
