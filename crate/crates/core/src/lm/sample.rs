//! Temperature sampling and autoregressive continuation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::vocab::TokenId;
use super::{LmError, NextTokenModel};

/// Why a continuation stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// The model emitted EOS.
    Eos,
    /// `max_new` tokens were appended without hitting EOS.
    MaxNew,
    /// The context window filled up.
    ContextFull,
}

/// Softmax of `logits / temperature`, computed with max subtraction.
pub fn next_token_dist(logits: &[f64], temperature: f64) -> Result<Vec<f64>, LmError> {
    if !(temperature > 0.0) {
        return Err(LmError::BadTemperature(temperature));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(LmError::NonFiniteLogits);
    }
    let scaled: Vec<f64> = logits.iter().map(|z| z / temperature).collect();
    let m = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = scaled.iter().map(|z| (z - m).exp()).collect();
    let sum: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= sum;
    }
    Ok(probs)
}

/// Draw a token index from a probability vector.
pub fn sample_token(probs: &[f64], rng: &mut ChaCha8Rng) -> TokenId {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Append sampled tokens to `prefix` until EOS, `max_new` tokens, or a full
/// context. Returns the whole sequence and why it stopped.
pub fn sample_continuation(
    model: &dyn NextTokenModel,
    prefix: &[TokenId],
    temperature: f64,
    rng: &mut ChaCha8Rng,
    max_new: usize,
) -> Result<(Vec<TokenId>, StopReason), LmError> {
    continue_with(model, prefix, max_new, |logits| {
        let probs = next_token_dist(logits, temperature)?;
        Ok(sample_token(&probs, rng))
    })
}

/// Greedy continuation: always take the argmax token.
pub fn greedy_continuation(
    model: &dyn NextTokenModel,
    prefix: &[TokenId],
    max_new: usize,
) -> Result<(Vec<TokenId>, StopReason), LmError> {
    continue_with(model, prefix, max_new, |logits| Ok(argmax(logits)))
}

fn continue_with(
    model: &dyn NextTokenModel,
    prefix: &[TokenId],
    max_new: usize,
    mut pick: impl FnMut(&[f64]) -> Result<TokenId, LmError>,
) -> Result<(Vec<TokenId>, StopReason), LmError> {
    let eos = model.eos();
    if prefix.is_empty() || prefix.len() > model.context_limit() {
        return Err(LmError::BadPrefix {
            len: prefix.len(),
            max: model.context_limit(),
        });
    }
    let mut seq = prefix.to_vec();
    for _ in 0..max_new {
        if seq.len() > model.context_limit() {
            return Ok((seq, StopReason::ContextFull));
        }
        let logits = model.logits(&seq)?;
        let tok = pick(&logits)?;
        seq.push(tok);
        if tok == eos {
            return Ok((seq, StopReason::Eos));
        }
    }
    Ok((seq, StopReason::MaxNew))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::encode_row;
    use crate::lm::vocab::build_vocab;
    use crate::lm::{train, LmConfig, Model};
    use crate::rng;
    use crate::table::{ColumnKind, Schema, Task, Value};

    #[test]
    fn uniform_logits_give_uniform_distribution() {
        let p = next_token_dist(&[1.5, 1.5, 1.5, 1.5], 0.7).unwrap();
        for v in p {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn hand_evaluated_softmax() {
        let p = next_token_dist(&[2.0f64.ln(), 0.0], 1.0).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-9);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn distributions_sum_to_one() {
        let mut r = rng::stream(5);
        for _ in 0..200 {
            let z: Vec<f64> = (0..10).map(|_| r.random_range(-8.0..8.0)).collect();
            for t in [0.1, 0.7, 2.0] {
                let p = next_token_dist(&z, t).unwrap();
                let sum: f64 = p.iter().sum();
                assert!((sum - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn argmax_is_temperature_invariant() {
        let mut r = rng::stream(6);
        for _ in 0..100 {
            let z: Vec<f64> = (0..12).map(|_| r.random_range(-5.0..5.0)).collect();
            let picks: Vec<usize> = [0.1, 0.7, 2.0]
                .iter()
                .map(|&t| argmax(&next_token_dist(&z, t).unwrap()))
                .collect();
            assert_eq!(picks[0], picks[1]);
            assert_eq!(picks[1], picks[2]);
        }
    }

    #[test]
    fn entropy_is_nondecreasing_in_temperature() {
        let entropy = |p: &[f64]| -> f64 {
            p.iter()
                .filter(|&&x| x > 0.0)
                .map(|&x| -x * x.ln())
                .sum()
        };
        let mut r = rng::stream(7);
        for _ in 0..50 {
            let z: Vec<f64> = (0..8).map(|_| r.random_range(-4.0..4.0)).collect();
            let mut last = -1.0;
            for t in [0.1, 0.5, 1.0, 2.0, 5.0] {
                let h = entropy(&next_token_dist(&z, t).unwrap());
                assert!(h >= last - 1e-12, "entropy decreased at T={t}");
                last = h;
            }
        }
    }

    #[test]
    fn bad_inputs_are_rejected() {
        assert!(matches!(
            next_token_dist(&[0.0], 0.0),
            Err(LmError::BadTemperature(_))
        ));
        assert!(matches!(
            next_token_dist(&[f64::NAN, 0.0], 1.0),
            Err(LmError::NonFiniteLogits)
        ));
    }

    fn memorized() -> (Model, Vec<usize>) {
        let schema = Schema::new(
            vec!["A".into(), "B".into()],
            vec![ColumnKind::Categorical, ColumnKind::Categorical],
            "Y".into(),
            Task::Classification,
        )
        .unwrap();
        let row = vec![
            Value::Cat("x1".into()),
            Value::Cat("x2".into()),
            Value::Cat("yes".into()),
        ];
        let s = encode_row(&row, &schema).unwrap();
        let vocab = build_vocab(&[s.clone()], &schema).unwrap();
        let seq = vocab.tokenize(&s).unwrap();
        let config = LmConfig {
            layers: 1,
            heads: 2,
            embed_dim: 16,
            max_len: seq.len(),
            epochs: 300,
            batch_size: 1,
            seed: 8,
            ..LmConfig::default()
        };
        let mut model = Model::init(&config, vocab).unwrap();
        train(&mut model, &[seq.clone()], &config).unwrap();
        (model, seq)
    }

    #[test]
    fn near_greedy_completes_memorized_sentence() {
        let (model, seq) = memorized();
        let mut r = rng::stream(9);
        // prefix = BOS + first cell
        let (out, stop) = sample_continuation(&model, &seq[..5], 0.01, &mut r, 32).unwrap();
        assert_eq!(stop, StopReason::Eos);
        assert_eq!(out, seq);
    }

    #[test]
    fn max_new_zero_returns_prefix() {
        let (model, seq) = memorized();
        let mut r = rng::stream(10);
        let (out, stop) = sample_continuation(&model, &seq[..5], 1.0, &mut r, 0).unwrap();
        assert_eq!(out, &seq[..5]);
        assert_eq!(stop, StopReason::MaxNew);
    }

    #[test]
    fn same_seed_same_continuation() {
        let (model, seq) = memorized();
        let mut r1 = rng::stream(11);
        let mut r2 = rng::stream(11);
        let a = sample_continuation(&model, &seq[..3], 1.5, &mut r1, 16).unwrap();
        let b = sample_continuation(&model, &seq[..3], 1.5, &mut r2, 16).unwrap();
        assert_eq!(a, b);
    }
}
