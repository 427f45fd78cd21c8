//! Closed cell-level vocabulary and tokenizer.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::LmError;
use crate::codec::Sentence;
use crate::table::Schema;

pub type TokenId = usize;

pub const BOS_TOKEN: &str = "<bos>";
pub const EOS_TOKEN: &str = "<eos>";
pub const PAD_TOKEN: &str = "<pad>";
const IS_TOKEN: &str = "is";
const SEP_TOKEN: &str = ",";

/// Token table with dense ids. Ordering is deterministic: column names in
/// schema order, `is`, `,`, value strings sorted per column, then specials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabData", into = "VocabData")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    bos: TokenId,
    eos: TokenId,
    pad: TokenId,
    is_id: TokenId,
    sep_id: TokenId,
}

#[derive(Serialize, Deserialize)]
struct VocabData {
    tokens: Vec<String>,
}

impl From<Vocab> for VocabData {
    fn from(v: Vocab) -> Self {
        VocabData { tokens: v.tokens }
    }
}

impl TryFrom<VocabData> for Vocab {
    type Error = LmError;

    fn try_from(data: VocabData) -> Result<Self, Self::Error> {
        Vocab::from_tokens(data.tokens)
    }
}

impl Vocab {
    fn from_tokens(tokens: Vec<String>) -> Result<Self, LmError> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            index.insert(tok.clone(), id);
        }
        let special = |name: &str| -> Result<TokenId, LmError> {
            index
                .get(name)
                .copied()
                .ok_or_else(|| LmError::MissingSpecial(name.to_string()))
        };
        let bos = special(BOS_TOKEN)?;
        let eos = special(EOS_TOKEN)?;
        let pad = special(PAD_TOKEN)?;
        let is_id = special(IS_TOKEN)?;
        let sep_id = special(SEP_TOKEN)?;
        Ok(Vocab {
            tokens,
            index,
            bos,
            eos,
            pad,
            is_id,
            sep_id,
        })
    }

    /// Build the vocabulary for a corpus of sentences over `schema`.
    pub fn build(corpus: &[Sentence], schema: &Schema) -> Result<Self, LmError> {
        if corpus.is_empty() {
            return Err(LmError::EmptyCorpus);
        }
        let mut tokens: Vec<String> = Vec::new();
        let mut push = |tok: &str, tokens: &mut Vec<String>| {
            if !tokens.iter().any(|t| t == tok) {
                tokens.push(tok.to_string());
            }
        };
        let column_names: Vec<&str> = schema
            .feature_names()
            .iter()
            .map(String::as_str)
            .chain(Some(schema.target_name()))
            .collect();
        for name in &column_names {
            push(name, &mut tokens);
        }
        push(IS_TOKEN, &mut tokens);
        push(SEP_TOKEN, &mut tokens);
        for name in &column_names {
            let mut values: Vec<&str> = corpus
                .iter()
                .flat_map(|s| s.cells())
                .filter(|c| c.name == *name)
                .map(|c| c.value_text.as_str())
                .collect();
            values.sort_unstable();
            values.dedup();
            for v in values {
                push(v, &mut tokens);
            }
        }
        for special in [BOS_TOKEN, EOS_TOKEN, PAD_TOKEN] {
            push(special, &mut tokens);
        }
        Vocab::from_tokens(tokens)
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn bos(&self) -> TokenId {
        self.bos
    }

    pub fn eos(&self) -> TokenId {
        self.eos
    }

    pub fn pad(&self) -> TokenId {
        self.pad
    }

    pub fn id(&self, token: &str) -> Result<TokenId, LmError> {
        self.index
            .get(token)
            .copied()
            .ok_or_else(|| LmError::OutOfVocab(token.to_string()))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id]
    }

    /// Tokenize a full sentence: BOS, then `[name, is, value, ,]` per cell,
    /// with the final separator replaced by EOS.
    pub fn tokenize(&self, s: &Sentence) -> Result<Vec<TokenId>, LmError> {
        let cells: Vec<(&str, &str)> = s
            .cells()
            .iter()
            .map(|c| (c.name.as_str(), c.value_text.as_str()))
            .collect();
        let mut ids = self.tokenize_prefix(&cells)?;
        let last = ids.len() - 1;
        ids[last] = self.eos;
        Ok(ids)
    }

    /// Tokenize condition cells as a generation prefix: BOS, then
    /// `[name, is, value, ,]` per cell, keeping the trailing separator so
    /// the model continues with a new cell.
    pub fn tokenize_prefix(&self, cells: &[(&str, &str)]) -> Result<Vec<TokenId>, LmError> {
        let mut ids = Vec::with_capacity(1 + 4 * cells.len());
        ids.push(self.bos);
        for (name, value) in cells {
            ids.push(self.id(name)?);
            ids.push(self.is_id);
            ids.push(self.id(value)?);
            ids.push(self.sep_id);
        }
        Ok(ids)
    }

    /// Render token ids back to sentence text. BOS/PAD are skipped and
    /// decoding stops at the first EOS.
    pub fn detokenize(&self, ids: &[TokenId]) -> String {
        let mut out = String::new();
        for &id in ids {
            if id == self.bos || id == self.pad {
                continue;
            }
            if id == self.eos {
                break;
            }
            let tok = self.token(id);
            if id == self.sep_id {
                out.push(',');
            } else {
                if !out.is_empty() && !out.ends_with(' ') {
                    out.push(' ');
                }
                out.push_str(tok);
            }
        }
        out
    }
}

/// Build the vocabulary for a corpus of sentences.
pub fn build_vocab(corpus: &[Sentence], schema: &Schema) -> Result<Vocab, LmError> {
    Vocab::build(corpus, schema)
}
