//! A small trainable causal autoregressive language model over
//! cell-structured sentences, with temperature sampling and attention
//! introspection.
//!
//! The tokenizer is cell-level: one token per column name, per value string,
//! plus the literal `is`, the separator `,`, and BOS/EOS/PAD. The closed
//! vocabulary keeps desk-scale training tractable and makes every generated
//! value schema-valid by construction; [`NextTokenModel`] is the seam where
//! a subword-tokenized backend could be swapped in.

mod model;
mod sample;
mod train;
mod vocab;

pub use model::{AttentionTrace, LmConfig, Model};
pub use sample::{
    greedy_continuation, next_token_dist, sample_continuation, sample_token, StopReason,
};
pub use train::{train, TrainReport};
pub use vocab::{build_vocab, TokenId, Vocab, BOS_TOKEN, EOS_TOKEN, PAD_TOKEN};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LmError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("token `{0}` is not in the vocabulary")]
    OutOfVocab(String),
    #[error("token id {id} out of range (vocab size {size})")]
    BadTokenId { id: usize, size: usize },
    #[error("sequence of length {len} exceeds max_len {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("prefix length {len} must be in 1..={max}")]
    BadPrefix { len: usize, max: usize },
    #[error("temperature must be positive, got {0}")]
    BadTemperature(f64),
    #[error("logits contain non-finite values")]
    NonFiniteLogits,
    #[error("training loss became non-finite at epoch {0}")]
    NonFiniteLoss(usize),
    #[error("invalid model config: {0}")]
    BadConfig(String),
    #[error("vocabulary is missing special token `{0}`")]
    MissingSpecial(String),
}

/// The minimal contract the generator needs from a language model backend:
/// logits over the vocabulary for any prefix, a context limit, and a stop
/// token.
pub trait NextTokenModel: Sync {
    fn vocab_size(&self) -> usize;
    /// Longest prefix `logits` accepts.
    fn context_limit(&self) -> usize;
    /// Token that terminates a generated sentence.
    fn eos(&self) -> TokenId;
    fn logits(&self, prefix: &[TokenId]) -> Result<Vec<f64>, LmError>;
}
