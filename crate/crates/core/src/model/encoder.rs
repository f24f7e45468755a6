use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{normal_matrix, LayerNormParams, TransformerLayer};
use crate::autograd::{ParamId, ParamStore, Tape, Var};
use crate::error::{Result, StanceError};
use crate::text::{TextTokenizer, WordTokenizer};

pub const CLS: usize = 0;
pub const SEP: usize = 1;
pub const UNK: usize = 2;
const SPECIALS: [&str; 3] = ["[CLS]", "[SEP]", "[UNK]"];

/// Number of special tokens in `[CLS] context [SEP] target [SEP]`.
pub const SPECIAL_TOKENS_PER_PAIR: usize = 3;

/// Encoder identifiers that can be built locally.
pub const TOY_ENCODER: &str = "toy";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub encoder_id: String,
    pub hidden_size: usize,
    pub max_length: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_size: usize,
    /// Standard deviation of the normal initialisation of weight matrices.
    pub init_std: f64,
    pub vocab_min_count: usize,
    pub vocab_max_size: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            encoder_id: TOY_ENCODER.into(),
            hidden_size: 32,
            max_length: 100,
            layers: 2,
            heads: 2,
            ff_size: 64,
            init_std: 0.1,
            vocab_min_count: 1,
            vocab_max_size: 30_000,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.encoder_id != TOY_ENCODER {
            return Err(StanceError::UnsupportedEncoder(self.encoder_id.clone()));
        }
        if self.max_length < SPECIAL_TOKENS_PER_PAIR + 1 {
            return Err(StanceError::invalid(format!(
                "max_length must leave room for at least one context token after {SPECIAL_TOKENS_PER_PAIR} specials"
            )));
        }
        if self.hidden_size == 0 || self.heads == 0 || !self.hidden_size.is_multiple_of(self.heads) {
            return Err(StanceError::invalid("hidden_size must be a positive multiple of heads"));
        }
        if self.ff_size == 0 {
            return Err(StanceError::invalid("ff_size must be positive"));
        }
        if !(self.init_std.is_finite() && self.init_std > 0.0) {
            return Err(StanceError::invalid("init_std must be positive"));
        }
        Ok(())
    }
}

/// Lowercased word vocabulary with three reserved specials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    /// Keeps words seen at least `min_count` times, most frequent first
    /// (ties alphabetical), up to `max_size` entries including specials.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, min_count: usize, max_size: usize) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for text in texts {
            for t in split_words(text) {
                *counts.entry(t).or_default() += 1;
            }
        }
        let mut words: Vec<(String, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_count.max(1)).collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        let room = max_size.saturating_sub(tokens.len());
        tokens.extend(words.into_iter().take(room).map(|(w, _)| w));
        tokens.into()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn ids(&self, text: &str) -> Vec<usize> {
        split_words(text).map(|w| self.id(&w)).collect()
    }
}

fn split_words(text: &str) -> impl Iterator<Item = String> {
    WordTokenizer.tokens(text).into_iter().map(|t| t.to_lowercase())
}

/// Lengths of (context, target) after trimming the pair to fit
/// `max_length` together with the specials.
///
/// One token at a time is removed from whichever side is currently longer;
/// on equal lengths the target loses the token.
pub fn truncate_pair(context_len: usize, target_len: usize, max_length: usize) -> Result<(usize, usize)> {
    if max_length < SPECIAL_TOKENS_PER_PAIR {
        return Err(StanceError::invalid(format!(
            "max_length {max_length} cannot hold the {SPECIAL_TOKENS_PER_PAIR} special tokens"
        )));
    }
    let budget = max_length - SPECIAL_TOKENS_PER_PAIR;
    let (mut c, mut t) = (context_len, target_len);
    while c + t > budget {
        if c > t {
            c -= 1;
        } else {
            t -= 1;
        }
    }
    Ok((c, t))
}

/// Token ids of `[CLS] context [SEP] target [SEP]` after truncation.
pub fn pair_ids(vocab: &Vocabulary, context: &str, target: &str, max_length: usize) -> Result<Vec<usize>> {
    let context_ids = vocab.ids(context);
    if context_ids.is_empty() {
        return Err(StanceError::invalid("empty context"));
    }
    let target_ids = vocab.ids(target);
    let (c, t) = truncate_pair(context_ids.len(), target_ids.len(), max_length)?;
    let mut ids = Vec::with_capacity(c + t + SPECIAL_TOKENS_PER_PAIR);
    ids.push(CLS);
    ids.extend_from_slice(&context_ids[..c]);
    ids.push(SEP);
    ids.extend_from_slice(&target_ids[..t]);
    ids.push(SEP);
    Ok(ids)
}

/// Small transformer encoder trained from scratch: token and position
/// embeddings, a stack of pre-norm layers and a final layer norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyEncoder {
    pub token_embedding: ParamId,
    pub position_embedding: ParamId,
    pub layers: Vec<TransformerLayer>,
    pub final_norm: LayerNormParams,
}

impl ToyEncoder {
    pub(crate) fn new(store: &mut ParamStore, config: &EncoderConfig, vocab_size: usize, rng: &mut impl Rng) -> Self {
        let d = config.hidden_size;
        let token_embedding = store.add("encoder.token_embedding", normal_matrix(rng, vocab_size, d, config.init_std));
        let position_embedding =
            store.add("encoder.position_embedding", normal_matrix(rng, config.max_length, d, config.init_std));
        let layers = (0..config.layers)
            .map(|i| TransformerLayer::new(store, &format!("encoder.layer{i}"), d, config.heads, config.ff_size, config.init_std, rng))
            .collect();
        let final_norm = LayerNormParams::new(store, "encoder.final_norm", d);
        Self {
            token_embedding,
            position_embedding,
            layers,
            final_norm,
        }
    }

    /// Token representations, `ids.len() x hidden_size`.
    pub fn forward(&self, tape: &mut Tape, ids: &[usize]) -> Var {
        let table = tape.param(self.token_embedding);
        let tokens = tape.gather_rows(table, ids);
        let positions = tape.param(self.position_embedding);
        let position_ids: Vec<usize> = (0..ids.len()).collect();
        let positions = tape.gather_rows(positions, &position_ids);
        let mut x = tape.add(tokens, positions);
        for layer in &self.layers {
            x = layer.forward(tape, x);
        }
        self.final_norm.forward(tape, x)
    }
}
