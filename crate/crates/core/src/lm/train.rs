//! Adam training loop over tokenized sentences.
//!
//! Deterministic for a fixed seed: the epoch shuffle comes from one seeded
//! stream and per-sequence gradients are reduced in batch order, so the
//! result does not depend on how many worker threads ran.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::model::{LmConfig, Model};
use super::vocab::TokenId;
use super::LmError;
use crate::rng;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const TRAIN_STREAM: u64 = 0x7261;

/// Per-epoch mean training loss in nats per token.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
}

impl TrainReport {
    pub fn final_loss(&self) -> f64 {
        *self.epoch_losses.last().unwrap_or(&f64::NAN)
    }
}

/// Minimize mean next-token cross-entropy of `corpus` under `model`.
pub fn train(
    model: &mut Model,
    corpus: &[Vec<TokenId>],
    config: &LmConfig,
) -> Result<TrainReport, LmError> {
    if corpus.is_empty() {
        return Err(LmError::EmptyCorpus);
    }
    for seq in corpus {
        if seq.len() > model.max_len() {
            return Err(LmError::SequenceTooLong {
                len: seq.len(),
                max: model.max_len(),
            });
        }
        if seq.len() < 2 {
            return Err(LmError::BadPrefix {
                len: seq.len(),
                max: model.max_len(),
            });
        }
    }
    let n_params = model.num_params();
    let batch_size = config.batch_size.max(1);
    let mut adam_m = vec![0.0; n_params];
    let mut adam_v = vec![0.0; n_params];
    let mut step = 0u32;
    let mut shuffle_rng = rng::substream(config.seed, TRAIN_STREAM, 0);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_nll = 0.0;
        let mut epoch_tokens = 0usize;
        for batch in order.chunks(batch_size) {
            let parts: Vec<Result<(f64, usize, Vec<f64>), LmError>> = batch
                .par_iter()
                .map(|&i| {
                    let mut g = vec![0.0; n_params];
                    let (nll, tokens) = model.sequence_grad(&corpus[i], &mut g)?;
                    Ok((nll, tokens, g))
                })
                .collect();
            let mut grads = vec![0.0; n_params];
            let mut batch_tokens = 0usize;
            for part in parts {
                let (nll, tokens, g) = part?;
                epoch_nll += nll;
                batch_tokens += tokens;
                for (acc, gi) in grads.iter_mut().zip(&g) {
                    *acc += gi;
                }
            }
            epoch_tokens += batch_tokens;
            let inv = 1.0 / batch_tokens as f64;
            for g in grads.iter_mut() {
                *g *= inv;
            }
            step += 1;
            let bc1 = 1.0 - BETA1.powi(step as i32);
            let bc2 = 1.0 - BETA2.powi(step as i32);
            let lr = config.learning_rate;
            let params = model.params_mut();
            for i in 0..n_params {
                let g = grads[i];
                adam_m[i] = BETA1 * adam_m[i] + (1.0 - BETA1) * g;
                adam_v[i] = BETA2 * adam_v[i] + (1.0 - BETA2) * g * g;
                let mhat = adam_m[i] / bc1;
                let vhat = adam_v[i] / bc2;
                params[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
            }
        }
        let mean = epoch_nll / epoch_tokens as f64;
        if !mean.is_finite() {
            return Err(LmError::NonFiniteLoss(epoch));
        }
        epoch_losses.push(mean);
    }
    Ok(TrainReport { epoch_losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::encode_row;
    use crate::lm::vocab::build_vocab;
    use crate::lm::{greedy_continuation, StopReason};
    use crate::table::{ColumnKind, Schema, Task, Value};

    fn schema2() -> Schema {
        Schema::new(
            vec!["A".into(), "B".into()],
            vec![ColumnKind::Categorical, ColumnKind::Categorical],
            "Y".into(),
            Task::Classification,
        )
        .unwrap()
    }

    fn row(a: &str, b: &str, y: &str) -> Vec<Value> {
        vec![
            Value::Cat(a.into()),
            Value::Cat(b.into()),
            Value::Cat(y.into()),
        ]
    }

    #[test]
    fn memorizes_a_single_sentence() {
        let schema = schema2();
        let sentence = encode_row(&row("x1", "x2", "yes"), &schema).unwrap();
        let vocab = build_vocab(&[sentence.clone()], &schema).unwrap();
        let seq = vocab.tokenize(&sentence).unwrap();
        let config = LmConfig {
            layers: 1,
            heads: 2,
            embed_dim: 16,
            max_len: seq.len(),
            epochs: 300,
            batch_size: 1,
            learning_rate: 3e-3,
            seed: 1,
            ..LmConfig::default()
        };
        let mut model = Model::init(&config, vocab).unwrap();
        let report = train(&mut model, &[seq.clone()], &config).unwrap();
        assert!(
            report.final_loss() < 0.01,
            "final loss {}",
            report.final_loss()
        );
        // greedy decode from BOS reproduces the memorized sentence
        let (decoded, stop) =
            greedy_continuation(&model, &seq[..1], model.max_len()).unwrap();
        assert_eq!(stop, StopReason::Eos);
        assert_eq!(decoded, seq);
        // argmax of logits matches the true next token for every prefix
        for cut in 1..seq.len() {
            let logits = model.logits(&seq[..cut]).unwrap();
            let argmax = logits
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert_eq!(argmax, seq[cut], "prefix length {cut}");
        }
    }

    #[test]
    fn ambiguous_label_converges_to_half_half() {
        let schema = schema2();
        let s1 = encode_row(&row("x1", "x2", "yes"), &schema).unwrap();
        let s2 = encode_row(&row("x1", "x2", "no"), &schema).unwrap();
        let vocab = build_vocab(&[s1.clone(), s2.clone()], &schema).unwrap();
        let seqs = vec![vocab.tokenize(&s1).unwrap(), vocab.tokenize(&s2).unwrap()];
        let config = LmConfig {
            layers: 1,
            heads: 2,
            embed_dim: 16,
            max_len: seqs[0].len(),
            epochs: 400,
            batch_size: 2,
            learning_rate: 3e-3,
            seed: 2,
            ..LmConfig::default()
        };
        let mut model = Model::init(&config, vocab.clone()).unwrap();
        train(&mut model, &seqs, &config).unwrap();
        // at the label position the model can do no better than 50/50
        let label_pos = seqs[0].len() - 2;
        let logits = model.logits(&seqs[0][..label_pos]).unwrap();
        let probs = crate::lm::next_token_dist(&logits, 1.0).unwrap();
        let p_yes = probs[vocab.id("yes").unwrap()];
        let p_no = probs[vocab.id("no").unwrap()];
        assert!((p_yes - 0.5).abs() < 0.05, "p(yes) = {p_yes}");
        assert!((p_no - 0.5).abs() < 0.05, "p(no) = {p_no}");
    }

    #[test]
    fn loss_decreases_over_training() {
        let schema = schema2();
        let rows = [
            row("a", "p", "yes"),
            row("a", "q", "no"),
            row("b", "p", "no"),
            row("b", "q", "yes"),
        ];
        let sentences: Vec<_> = rows
            .iter()
            .map(|r| encode_row(r, &schema).unwrap())
            .collect();
        let vocab = build_vocab(&sentences, &schema).unwrap();
        let seqs: Vec<_> = sentences.iter().map(|s| vocab.tokenize(s).unwrap()).collect();
        let config = LmConfig {
            layers: 1,
            heads: 2,
            embed_dim: 16,
            max_len: seqs[0].len(),
            epochs: 50,
            batch_size: 4,
            seed: 3,
            ..LmConfig::default()
        };
        let mut model = Model::init(&config, vocab).unwrap();
        let report = train(&mut model, &seqs, &config).unwrap();
        assert!(report.epoch_losses[49] <= report.epoch_losses[0]);
    }

    #[test]
    fn training_is_deterministic() {
        let schema = schema2();
        let s = encode_row(&row("x1", "x2", "yes"), &schema).unwrap();
        let vocab = build_vocab(&[s.clone()], &schema).unwrap();
        let seq = vocab.tokenize(&s).unwrap();
        let config = LmConfig {
            layers: 1,
            heads: 1,
            embed_dim: 8,
            max_len: seq.len(),
            epochs: 5,
            seed: 11,
            ..LmConfig::default()
        };
        let mut m1 = Model::init(&config, vocab.clone()).unwrap();
        let mut m2 = Model::init(&config, vocab).unwrap();
        let r1 = train(&mut m1, &[seq.clone()], &config).unwrap();
        let r2 = train(&mut m2, &[seq], &config).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(m1.params(), m2.params());
    }

    #[test]
    fn overlong_sequence_is_rejected() {
        let schema = schema2();
        let s = encode_row(&row("x1", "x2", "yes"), &schema).unwrap();
        let vocab = build_vocab(&[s.clone()], &schema).unwrap();
        let seq = vocab.tokenize(&s).unwrap();
        let config = LmConfig {
            layers: 1,
            heads: 1,
            embed_dim: 8,
            max_len: seq.len() - 1,
            epochs: 1,
            seed: 0,
            ..LmConfig::default()
        };
        let mut model = Model::init(&config, vocab).unwrap();
        assert!(matches!(
            train(&mut model, &[seq], &config),
            Err(LmError::SequenceTooLong { .. })
        ));
    }
}
