//! Differentiable scoring of complete sequences for training.
//!
//! One forward pass per sequence (teacher forcing): position k of the model
//! sequence (begin marker + k tokens) predicts prefix token k under the
//! grammar mask replayed at that step.

use std::sync::Arc;

use crate::autodiff::{NodeId, Tape};
use crate::expr::TokenId;
use crate::grammar::{relation_matrix, valid_next_tokens, PartialAst};
use crate::policy::net::{model_relation_codes, TapeParams};
use crate::policy::{PolicyError, SymFormer};

/// Differentiable per-sequence quantities, as tape nodes.
pub struct SequenceScore {
    /// Sum over steps of the chosen token's log-probability.
    pub log_prob: NodeId,
    /// log_prob / number of tokens.
    pub per_token_mean_log_prob: NodeId,
    /// Sum over steps of the masked distribution's entropy.
    pub entropy_sum: NodeId,
    pub steps: usize,
}

/// Score a complete token sequence under the current parameters and masks.
/// Errors with `InvalidTrajectory` if any token falls outside its step's
/// valid set (e.g. a memory entry from a wider vocabulary).
pub fn score_sequence(
    policy: &SymFormer,
    tape: &mut Tape,
    params: &TapeParams,
    tokens: &[TokenId],
    allowed: &[bool],
) -> Result<SequenceScore, PolicyError> {
    let vocab = &policy.vocab;
    let vsize = vocab.len();
    let steps = tokens.len();
    assert!(steps > 0, "cannot score an empty sequence");

    // Replay the grammar to collect per-step masks and validate the tokens.
    let mut ast = PartialAst::new();
    let mut mask = vec![false; steps * vsize];
    for (k, &tok) in tokens.iter().enumerate() {
        let step_mask =
            valid_next_tokens(&ast, &tokens[..k], vocab, allowed, policy.config.d_max);
        if !step_mask[tok.0] {
            return Err(PolicyError::InvalidTrajectory { token: tok, step: k });
        }
        mask[k * vsize..(k + 1) * vsize].copy_from_slice(&step_mask);
        ast.push(vocab.arity(tok))?;
    }

    let rel = relation_matrix(&ast);
    let codes = model_relation_codes(&rel);
    let ids: Vec<usize> =
        std::iter::once(policy.bos_index()).chain(tokens.iter().map(|t| t.0)).collect();
    let h = policy.forward_hidden(tape, params, &ids, &codes)?;
    // Position k (seeing the marker plus tokens < k) predicts token k.
    let logits = policy.project_rows(tape, params, h, (0..steps).collect())?;

    let mask = Arc::new(mask);
    let log_probs = tape.masked_log_softmax(logits, mask.clone());
    let probs = tape.masked_softmax(logits, mask);
    let chosen = tape.select_per_row(log_probs, tokens.iter().map(|t| t.0).collect());
    let log_prob = tape.sum(chosen);
    let per_token = tape.scale(log_prob, 1.0 / steps as f64);
    let plogp = tape.mul(probs, log_probs)?;
    let plogp_sum = tape.sum(plogp);
    let entropy_sum = tape.scale(plogp_sum, -1.0);

    Ok(SequenceScore { log_prob, per_token_mean_log_prob: per_token, entropy_sum, steps })
}

/// Non-differentiable convenience: the summed log-probability of a sequence
/// under the current parameters.
pub fn sequence_log_prob(
    policy: &SymFormer,
    tokens: &[TokenId],
    allowed: &[bool],
) -> Result<f64, PolicyError> {
    let mut tape = Tape::new();
    let params = policy.insert_params(&mut tape, false);
    let score = score_sequence(policy, &mut tape, &params, tokens, allowed)?;
    Ok(tape.value(score.log_prob).data()[0])
}
