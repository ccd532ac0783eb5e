//! Autoregressive grammar-constrained sampling.
//!
//! Sampling runs on the incremental row decoder; the masked softmax /
//! log-softmax kernels are the same ones behind the tape ops, so recorded
//! per-step log-probabilities re-score bit-identically during training.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::autodiff::{masked_log_softmax_kernel, masked_softmax_kernel};
use crate::expr::{is_degenerate, ExprTree, TokenId};
use crate::grammar::valid_next_tokens;
use crate::policy::decode::RowDecoder;
use crate::policy::{PolicyError, SymFormer};

/// Retries after a degenerate draw before the sequence is kept as-is.
pub const DEGENERATE_RETRY_CAP: usize = 10;

/// One sampled trajectory: the complete tree plus per-step statistics.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub tree: ExprTree,
    /// Log-probability of the chosen token at each step.
    pub log_probs: Vec<f64>,
    /// Entropy of the masked next-token distribution at each step.
    pub entropies: Vec<f64>,
    pub depth: usize,
}

impl Rollout {
    pub fn total_log_prob(&self) -> f64 {
        self.log_probs.iter().sum()
    }
}

/// Next-token probabilities over the full vocabulary for a (possibly empty)
/// prefix: zero exactly on tokens outside the grammar/depth/stage-valid set.
pub fn next_token_distribution(
    policy: &SymFormer,
    prefix: &[TokenId],
    allowed: &[bool],
) -> Result<Vec<f64>, PolicyError> {
    let mut dec = RowDecoder::new(policy);
    for &t in prefix {
        assert!(!dec.ast.is_complete(), "next_token_distribution requires an open slot");
        dec.push(t);
    }
    assert!(!dec.ast.is_complete(), "next_token_distribution requires an open slot");
    let mask = valid_next_tokens(&dec.ast, prefix, &policy.vocab, allowed, policy.config.d_max);
    Ok(masked_softmax_kernel(dec.logits(), &mask, 1, policy.vocab.len()))
}

fn entropy_of(p: &[f64], lp: &[f64], mask: &[bool]) -> f64 {
    let mut h = 0.0;
    for j in 0..p.len() {
        if mask[j] && p[j] > 0.0 {
            h -= p[j] * lp[j];
        }
    }
    h
}

fn sample_index(p: &[f64], mask: &[bool], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_valid = 0;
    for (j, &pj) in p.iter().enumerate() {
        if !mask[j] {
            continue;
        }
        last_valid = j;
        acc += pj;
        if u < acc {
            return j;
        }
    }
    // Rounding left acc slightly below 1; take the last valid token.
    last_valid
}

/// Sample one complete rollout under grammar/depth masks, resampling
/// degenerate draws up to the retry cap.
pub fn sample_rollout(
    policy: &SymFormer,
    allowed: &[bool],
    rng: &mut ChaCha8Rng,
) -> Result<Rollout, PolicyError> {
    let vocab = &policy.vocab;
    let vsize = vocab.len();
    let mut kept: Option<Rollout> = None;
    for _attempt in 0..=DEGENERATE_RETRY_CAP {
        let mut dec = RowDecoder::new(policy);
        let mut log_probs = Vec::new();
        let mut entropies = Vec::new();
        while !dec.ast.is_complete() {
            let mask =
                valid_next_tokens(&dec.ast, dec.prefix(), vocab, allowed, policy.config.d_max);
            let p = masked_softmax_kernel(dec.logits(), &mask, 1, vsize);
            let lp = masked_log_softmax_kernel(dec.logits(), &mask, 1, vsize);
            let idx = sample_index(&p, &mask, rng);
            log_probs.push(lp[idx]);
            entropies.push(entropy_of(&p, &lp, &mask));
            dec.push(TokenId(idx));
        }
        let prefix = dec.prefix().to_vec();
        let n_consts = prefix.iter().filter(|&&t| vocab.is_const(t)).count();
        let tree = ExprTree::new(prefix, vec![1.0; n_consts]);
        let depth = dec.ast.max_depth();
        let rollout = Rollout { tree, log_probs, entropies, depth };
        if !is_degenerate(vocab, &rollout.tree)? {
            return Ok(rollout);
        }
        kept = Some(rollout);
    }
    // Retry cap exhausted: keep the last draw and score it normally.
    Ok(kept.expect("at least one attempt"))
}

/// Sample a batch of rollouts against a parameter snapshot. Each rollout
/// draws from its own deterministic stream, so results are identical for a
/// given seed regardless of worker count.
pub fn sample_batch(
    policy: &SymFormer,
    n: usize,
    allowed: &[bool],
    seed: u64,
) -> Result<Vec<Rollout>, PolicyError> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(
                seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(i as u64 + 1)),
            );
            sample_rollout(policy, allowed, &mut rng)
        })
        .collect()
}
