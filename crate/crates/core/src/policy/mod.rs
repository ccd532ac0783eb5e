//! The expression-generating policy network: token + traversal positional
//! embeddings, a stack of decoder layers whose attention scores are
//! conditioned on pairwise tree relations, and a masked output head.
//!
//! The same tape-based forward serves sampling (tape dropped afterwards) and
//! training (backward over the tape), so sampled log-probabilities re-score
//! bit-identically.

mod decode;
mod net;
mod sample;
mod score;

pub use decode::RowDecoder;
pub use net::{causal_mask, model_relation_codes, TapeParams};
pub use sample::{next_token_distribution, sample_batch, sample_rollout, Rollout, DEGENERATE_RETRY_CAP};
pub use score::{score_sequence, sequence_log_prob, SequenceScore};

use rand::Rng;

use thiserror::Error;

use crate::autodiff::params::ParamSet;
use crate::autodiff::{Array, AutodiffError};
use crate::expr::{TokenId, Vocabulary};
use crate::grammar::NUM_RELATIONS;

#[derive(Debug, Clone, Error)]
pub enum PolicyError {
    #[error("autodiff failure: {0}")]
    Autodiff(#[from] AutodiffError),
    #[error("expression error: {0}")]
    Expr(#[from] crate::expr::ExprError),
    #[error("grammar failure: {0}")]
    Grammar(#[from] crate::grammar::GrammarError),
    #[error("token {token:?} at step {step} is not valid under the current masks")]
    InvalidTrajectory { token: TokenId, step: usize },
    #[error("policy was built over a different vocabulary (size {expected}, got {got})")]
    VocabularyMismatch { expected: usize, got: usize },
    #[error("positional table must cover at least one position")]
    EmptyPositionalTable,
    #[error("model width {d_model} is not divisible by {heads} heads")]
    BadHeadSplit { d_model: usize, heads: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct PolicyConfig {
    pub d_model: usize,
    pub ffn_hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub d_max: usize,
    pub temperature: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self { d_model: 64, ffn_hidden: 128, layers: 4, heads: 8, d_max: 7, temperature: 1.0 }
    }
}

impl PolicyConfig {
    pub fn d_head(&self) -> usize {
        self.d_model / self.heads
    }

    /// Longest model sequence: begin marker plus a full binary tree of
    /// depth `d_max`.
    pub fn max_len(&self) -> usize {
        (1usize << self.d_max).max(2)
    }
}

/// Policy network state: configuration, vocabulary, and trainable tensors.
#[derive(Debug, Clone)]
pub struct SymFormer {
    pub config: PolicyConfig,
    pub vocab: Vocabulary,
    pub params: ParamSet,
    pos_table: Array,
}

impl SymFormer {
    pub fn new(
        config: PolicyConfig,
        vocab: Vocabulary,
        rng: &mut impl Rng,
    ) -> Result<Self, PolicyError> {
        if config.d_model % config.heads != 0 {
            return Err(PolicyError::BadHeadSplit { d_model: config.d_model, heads: config.heads });
        }
        if config.d_max == 0 {
            return Err(PolicyError::EmptyPositionalTable);
        }
        let params = init_params(&config, vocab.len(), rng);
        let pos_table = positional_table(config.max_len(), config.d_model)?;
        Ok(Self { config, vocab, params, pos_table })
    }

    pub fn pos_table(&self) -> &Array {
        &self.pos_table
    }

    /// Begin-of-sequence row index in the embedding table.
    pub fn bos_index(&self) -> usize {
        self.vocab.len()
    }

    /// Replace parameters (checkpoint restore). Shapes must match.
    pub fn load_params(&mut self, params: ParamSet) -> Result<(), PolicyError> {
        if params.len() != self.params.len() {
            return Err(PolicyError::VocabularyMismatch {
                expected: self.params.len(),
                got: params.len(),
            });
        }
        for (cur, new) in self.params.tensors.iter().zip(&params.tensors) {
            if cur.array.shape() != new.array.shape() {
                return Err(PolicyError::VocabularyMismatch {
                    expected: cur.array.numel(),
                    got: new.array.numel(),
                });
            }
        }
        self.params = params;
        Ok(())
    }
}

/// Sinusoidal traversal positional encoding with base 10000: even columns
/// sin, odd columns cos, so position 0 encodes as [0, 1, 0, 1, ...].
pub fn positional_table(max_len: usize, d_model: usize) -> Result<Array, PolicyError> {
    if max_len == 0 {
        return Err(PolicyError::EmptyPositionalTable);
    }
    let mut data = vec![0.0; max_len * d_model];
    for pos in 0..max_len {
        for i in 0..d_model / 2 {
            let freq = 1.0 / 10000f64.powf(2.0 * i as f64 / d_model as f64);
            let angle = pos as f64 * freq;
            data[pos * d_model + 2 * i] = angle.sin();
            data[pos * d_model + 2 * i + 1] = angle.cos();
        }
    }
    Ok(Array::new(max_len, d_model, data))
}

fn xavier_uniform(rng: &mut impl Rng, rows: usize, cols: usize) -> Array {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array::new(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect())
}

fn small_uniform(rng: &mut impl Rng, rows: usize, cols: usize) -> Array {
    Array::new(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-0.05..0.05)).collect())
}

fn init_params(config: &PolicyConfig, vocab_size: usize, rng: &mut impl Rng) -> ParamSet {
    let d = config.d_model;
    let mut p = ParamSet::new();
    // Token embeddings plus one begin-of-sequence row.
    p.push("embed", small_uniform(rng, vocab_size + 1, d));
    // Per-head relation embeddings, row = head * NUM_RELATIONS + relation.
    p.push("rel_embed", small_uniform(rng, config.heads * NUM_RELATIONS, config.d_head()));
    for l in 0..config.layers {
        p.push(format!("layer{l}.attn.wq"), xavier_uniform(rng, d, d));
        p.push(format!("layer{l}.attn.wk"), xavier_uniform(rng, d, d));
        p.push(format!("layer{l}.attn.wv"), xavier_uniform(rng, d, d));
        p.push(format!("layer{l}.attn.wo"), xavier_uniform(rng, d, d));
        p.push(format!("layer{l}.ln1.gamma"), Array::new(1, d, vec![1.0; d]));
        p.push(format!("layer{l}.ln1.beta"), Array::zeros(1, d));
        p.push(format!("layer{l}.ffn.w1"), xavier_uniform(rng, d, config.ffn_hidden));
        p.push(format!("layer{l}.ffn.b1"), Array::zeros(1, config.ffn_hidden));
        p.push(format!("layer{l}.ffn.w2"), xavier_uniform(rng, config.ffn_hidden, d));
        p.push(format!("layer{l}.ffn.b2"), Array::zeros(1, d));
        p.push(format!("layer{l}.ln2.gamma"), Array::new(1, d, vec![1.0; d]));
        p.push(format!("layer{l}.ln2.beta"), Array::zeros(1, d));
    }
    p.push("out.w", xavier_uniform(rng, d, vocab_size));
    p.push("out.b", Array::zeros(1, vocab_size));
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn position_zero_alternates_zero_one() {
        let t = positional_table(4, 8).unwrap();
        for i in 0..4 {
            assert_eq!(t.at(0, 2 * i), 0.0);
            assert_eq!(t.at(0, 2 * i + 1), 1.0);
        }
    }

    #[test]
    fn positions_differ() {
        let t = positional_table(8, 8).unwrap();
        assert_ne!(t.data()[0..8], t.data()[8..16]);
    }

    #[test]
    fn empty_positional_table_is_an_error() {
        assert!(positional_table(0, 8).is_err());
    }

    #[test]
    fn head_split_validated() {
        let vocab = Vocabulary::standard(&["x"], None, None);
        let cfg = PolicyConfig { d_model: 10, heads: 4, ..PolicyConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(SymFormer::new(cfg, vocab, &mut rng).is_err());
    }
}
