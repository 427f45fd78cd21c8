//! Tabular data synthesis with a small trainable causal language model.
//!
//! The pipeline serializes table rows as "Name is value" sentences, fine-tunes
//! an autoregressive model on permuted copies of the corpus, samples new rows
//! conditioned on feature values, and queries the same model for labels.
//! A metric suite (TSTR, discriminator, inverse KL, density, coverage, DCR)
//! scores the synthetic data against the real data.

pub mod codec;
pub mod datasets;
pub mod eval;
pub mod gen;
pub mod lm;
pub mod predictor;
pub mod rng;
pub mod table;
