//! Differentiable training objectives assembled from per-sequence scores.

use crate::autodiff::{Array, AutodiffError, NodeId, Tape};
use crate::policy::SequenceScore;

/// Policy-gradient loss
/// `-(1/N) sum_i w_i r_i log pi(T_i) - lambda_ent * mean node entropy`,
/// the mean running over every step of every rollout.
pub fn build_policy_loss(
    tape: &mut Tape,
    scores: &[SequenceScore],
    weights: &[f64],
    rewards: &[f64],
    lambda_ent: f64,
) -> Result<NodeId, AutodiffError> {
    assert_eq!(scores.len(), weights.len());
    assert_eq!(scores.len(), rewards.len());
    let n = scores.len();
    let total_steps: usize = scores.iter().map(|s| s.steps).sum();

    let mut acc = tape.constant(Array::scalar(0.0));
    for (s, (&w, &r)) in scores.iter().zip(weights.iter().zip(rewards)) {
        let term = tape.scale(s.log_prob, w * r);
        acc = tape.add(acc, term)?;
    }
    let policy_term = tape.scale(acc, -1.0 / n.max(1) as f64);

    let mut ent_acc = tape.constant(Array::scalar(0.0));
    for s in scores {
        ent_acc = tape.add(ent_acc, s.entropy_sum)?;
    }
    let ent_term = tape.scale(ent_acc, -lambda_ent / total_steps.max(1) as f64);

    tape.add(policy_term, ent_term)
}

/// Imitation loss: reward-softmax-weighted mean per-token negative
/// log-likelihood of the stored sequences under the current policy.
pub fn build_imitation_loss(
    tape: &mut Tape,
    scores: &[SequenceScore],
    alphas: &[f64],
) -> Result<NodeId, AutodiffError> {
    assert_eq!(scores.len(), alphas.len());
    let mut acc = tape.constant(Array::scalar(0.0));
    for (s, &a) in scores.iter().zip(alphas) {
        // NLL = -mean log prob.
        let term = tape.scale(s.per_token_mean_log_prob, -a);
        acc = tape.add(acc, term)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Vocabulary;
    use crate::policy::{sample_batch, score_sequence, PolicyConfig, SymFormer};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn policy() -> SymFormer {
        let vocab = Vocabulary::standard(&["x", "y"], None, None);
        let cfg = PolicyConfig {
            d_model: 16,
            ffn_hidden: 32,
            layers: 1,
            heads: 4,
            d_max: 4,
            temperature: 1.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        SymFormer::new(cfg, vocab, &mut rng).unwrap()
    }

    #[test]
    fn zero_rewards_and_zero_entropy_weight_give_zero_loss() {
        let p = policy();
        let allowed = p.vocab.stage_mask(3);
        let rollouts = sample_batch(&p, 4, &allowed, 3).unwrap();
        let mut tape = Tape::new();
        let params = p.insert_params(&mut tape, true);
        let scores: Vec<_> = rollouts
            .iter()
            .map(|r| score_sequence(&p, &mut tape, &params, &r.tree.tokens, &allowed).unwrap())
            .collect();
        let loss =
            build_policy_loss(&mut tape, &scores, &[0.5; 4], &[0.0; 4], 0.0).unwrap();
        assert_eq!(tape.value(loss).data()[0], 0.0);
    }

    #[test]
    fn single_rollout_plugin_value() {
        // w = 0.5, r = 1, log pi = -2  =>  policy term = 1.0.
        let p = policy();
        let allowed = p.vocab.stage_mask(3);
        let rollouts = sample_batch(&p, 1, &allowed, 5).unwrap();
        let mut tape = Tape::new();
        let params = p.insert_params(&mut tape, true);
        let score =
            score_sequence(&p, &mut tape, &params, &rollouts[0].tree.tokens, &allowed).unwrap();
        let logp = tape.value(score.log_prob).data()[0];
        let loss = build_policy_loss(&mut tape, &[score], &[0.5], &[1.0], 0.0).unwrap();
        let got = tape.value(loss).data()[0];
        assert!((got - (-0.5 * logp)).abs() < 1e-15);
    }

    #[test]
    fn entropy_weight_strictly_lowers_loss() {
        let p = policy();
        let allowed = p.vocab.stage_mask(3);
        let rollouts = sample_batch(&p, 4, &allowed, 8).unwrap();
        let value_at = |lambda: f64| -> f64 {
            let mut tape = Tape::new();
            let params = p.insert_params(&mut tape, false);
            let scores: Vec<_> = rollouts
                .iter()
                .map(|r| score_sequence(&p, &mut tape, &params, &r.tree.tokens, &allowed).unwrap())
                .collect();
            let loss =
                build_policy_loss(&mut tape, &scores, &[0.25; 4], &[0.1; 4], lambda).unwrap();
            tape.value(loss).data()[0]
        };
        let l0 = value_at(0.0);
        let l1 = value_at(0.3);
        let l2 = value_at(0.6);
        assert!(l1 < l0);
        assert!(l2 < l1);
    }

    #[test]
    fn imitation_loss_weighted_mean_nll() {
        let p = policy();
        let allowed = p.vocab.stage_mask(3);
        let rollouts = sample_batch(&p, 2, &allowed, 13).unwrap();
        let mut tape = Tape::new();
        let params = p.insert_params(&mut tape, false);
        let scores: Vec<_> = rollouts
            .iter()
            .map(|r| score_sequence(&p, &mut tape, &params, &r.tree.tokens, &allowed).unwrap())
            .collect();
        let nll: Vec<f64> = scores
            .iter()
            .map(|s| -tape.value(s.per_token_mean_log_prob).data()[0])
            .collect();
        let alphas = [0.7, 0.3];
        let loss = build_imitation_loss(&mut tape, &scores, &alphas).unwrap();
        let want = 0.7 * nll[0] + 0.3 * nll[1];
        assert!((tape.value(loss).data()[0] - want).abs() < 1e-12);
    }
}
