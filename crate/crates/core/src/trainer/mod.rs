//! The training loop: rank rewards, depth weights, entropy-regularized
//! policy updates, imitation from the top-k memory, and the staged
//! curriculum sharing one policy.

pub mod loss;
pub mod memory;
pub mod rewards;

pub use loss::{build_imitation_loss, build_policy_loss};
pub use memory::{MemoryEntry, TopKMemory};
pub use rewards::{depth_weights, imitation_weights, normalize_rewards, rank_rewards};

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::autodiff::optim::{grad_clip, AdamConfig, OptimizerState};
use crate::autodiff::{AutodiffError, Tape};
use crate::constopt::{optimize_constants, refine_memory, ConstOptConfig};
use crate::expr::{ExprError, ExprTree, TokenId};
use crate::pde::energy::sample_collocation;
use crate::pde::metrics::{mse_tree, srr_check};
use crate::pde::{energy, EnergyReport, PdeError, PdeProblem};
use crate::policy::{sample_batch, score_sequence, PolicyConfig, PolicyError, SymFormer};

#[derive(Debug, Error)]
pub enum TrainerError {
    #[error("pde error: {0}")]
    Pde(#[from] PdeError),
    #[error("policy error: {0}")]
    Policy(#[from] PolicyError),
    #[error("autodiff error: {0}")]
    Autodiff(#[from] AutodiffError),
    #[error("expression error: {0}")]
    Expr(#[from] ExprError),
}

/// Training hyperparameters. Defaults follow the published recipe: batch 64,
/// entropy weight 0.3, imitation softmax temperature 0.1 triggered at best
/// reward 0.8, policy Adam at 5e-4 with plateau decay 0.9/10 and gradient
/// clip 5, memory of 10 refined every 10 epochs, stages advancing at reward
/// 0.99 or 200 epochs with a hard cap of 500.
#[derive(Debug, Clone)]
pub struct TrainerConfig {
    pub batch_size: usize,
    pub lambda_ent: f64,
    pub imitation_tau: f64,
    pub imitation_trigger: f64,
    pub lambda_imit: f64,
    pub policy_lr: f64,
    pub plateau_factor: f64,
    pub plateau_patience: u32,
    pub grad_clip: f64,
    pub refine_every: usize,
    pub stage_max_epochs: usize,
    pub stage_advance_epochs: usize,
    pub stage_advance_reward: f64,
    pub memory_capacity: usize,
    pub delta_structural: usize,
    pub delta_behavioral: f64,
    pub n_test_points: usize,
    pub const_steps: usize,
    pub const_refine_steps: usize,
    pub const_lr: f64,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            lambda_ent: 0.3,
            imitation_tau: 0.1,
            imitation_trigger: 0.8,
            lambda_imit: 1.0,
            policy_lr: 5e-4,
            plateau_factor: 0.9,
            plateau_patience: 10,
            grad_clip: 5.0,
            refine_every: 10,
            stage_max_epochs: 500,
            stage_advance_epochs: 200,
            stage_advance_reward: 0.99,
            memory_capacity: 10,
            delta_structural: 3,
            delta_behavioral: 1e-3,
            n_test_points: 64,
            const_steps: 50,
            const_refine_steps: 200,
            const_lr: 0.02,
            seed: 0,
        }
    }
}

/// One curriculum stage: index, the active vocabulary view, and whether the
/// stage scores only the initial condition.
#[derive(Debug, Clone)]
pub struct CurriculumStage {
    pub index: u8,
    pub allowed: Vec<bool>,
    pub ic_only: bool,
}

impl CurriculumStage {
    pub fn new(problem: &PdeProblem, index: u8) -> Self {
        Self {
            index,
            allowed: problem.vocab.stage_mask(index),
            ic_only: problem.time_dependent && index == 1,
        }
    }
}

/// Stage transition rule: advance immediately once the best reward clears
/// the threshold, otherwise at the fallback epoch count, never past the
/// hard cap.
pub fn stage_should_advance(epoch: usize, best_reward: f64, cfg: &TrainerConfig) -> bool {
    best_reward > cfg.stage_advance_reward
        || epoch >= cfg.stage_advance_epochs.min(cfg.stage_max_epochs)
}

/// One history row.
#[derive(Debug, Clone, Copy)]
pub struct EpochRecord {
    pub epoch: usize,
    pub stage: u8,
    /// Best reward observed so far within the stage (monotone).
    pub best_reward: f64,
    pub mean_reward: f64,
    pub mean_entropy: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct StageReport {
    pub stage: u8,
    pub epochs: usize,
    pub best_reward: f64,
    pub advanced_on_reward: bool,
}

/// Final outcome of a curriculum run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub problem: String,
    pub seed: u64,
    pub best: Option<BestSolution>,
    pub stage_epochs: Vec<usize>,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone)]
pub struct BestSolution {
    pub tree: ExprTree,
    pub reward: f64,
    pub mse: f64,
    pub srr: bool,
}

fn mix_seed(base: u64, tag: u64, a: u64, b: u64) -> u64 {
    let mut z = base
        .wrapping_add(tag.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(a.wrapping_mul(0xbf58_476d_1ce4_e5b9))
        .wrapping_add(b.wrapping_mul(0x94d0_49bb_1331_11eb));
    z ^= z >> 30;
    z = z.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z ^= z >> 27;
    z
}

/// Fixed behavioral test points for the memory, drawn once per run.
pub fn draw_test_points(problem: &PdeProblem, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 7, 0, 0));
    let layout_len = problem.point_layout().len();
    (0..n)
        .map(|_| {
            let mut p = vec![0.0; layout_len];
            let mut col = 0;
            for &(lo, hi) in &problem.domain {
                p[col] = rng.gen_range(lo..hi);
                col += 1;
            }
            if problem.time_dependent {
                p[col] = rng.gen_range(0.0..problem.t_max);
                col += 1;
            }
            if let Some((lo, hi)) = problem.kappa_range {
                p[col] = rng.gen_range(lo..hi);
            }
            p
        })
        .collect()
}

struct CandidateOutcome {
    constants: Vec<f64>,
    report: EnergyReport,
}

/// Run one curriculum stage on a shared policy. `global_epoch` numbers the
/// emitted history rows; each row is handed to `sink` as it completes so an
/// interrupted run keeps its partial history.
#[allow(clippy::too_many_arguments)]
pub fn train_stage(
    problem: &PdeProblem,
    stage: &CurriculumStage,
    policy: &mut SymFormer,
    memory: &mut TopKMemory,
    opt: &mut OptimizerState,
    cfg: &TrainerConfig,
    global_epoch: &mut usize,
    sink: &mut dyn FnMut(&EpochRecord),
) -> Result<StageReport, TrainerError> {
    let mut stage_best = f64::NEG_INFINITY;
    let mut advanced_on_reward = false;
    let mut epochs = 0usize;
    let epoch_limit = cfg.stage_advance_epochs.min(cfg.stage_max_epochs);

    for epoch in 1..=epoch_limit {
        epochs = epoch;
        *global_epoch += 1;

        // Sample a batch against the current parameter snapshot.
        let rollouts = sample_batch(
            policy,
            cfg.batch_size,
            &stage.allowed,
            mix_seed(cfg.seed, 1, stage.index as u64, epoch as u64),
        )?;

        // Shared collocation draw: rank rewards compare candidates, so all
        // of them score on identical points.
        let mut colloc_rng =
            ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 2, stage.index as u64, epoch as u64));
        let epoch_colloc = sample_collocation(problem, stage.index, &mut colloc_rng);

        // Deduplicate identical trees; constants start equal so outcomes match.
        let mut unique: Vec<ExprTree> = Vec::new();
        let mut index_of: HashMap<Vec<TokenId>, usize> = HashMap::new();
        let mut rollout_unique = vec![0usize; rollouts.len()];
        for (i, r) in rollouts.iter().enumerate() {
            let ui = *index_of.entry(r.tree.tokens.clone()).or_insert_with(|| {
                unique.push(r.tree.clone());
                unique.len() - 1
            });
            rollout_unique[i] = ui;
        }

        let const_cfg = ConstOptConfig { steps: cfg.const_steps, lr: cfg.const_lr };
        let epoch_seed = mix_seed(cfg.seed, 3, stage.index as u64, epoch as u64);
        let outcomes: Vec<CandidateOutcome> = unique
            .par_iter()
            .enumerate()
            .map(|(ui, tree)| -> Result<CandidateOutcome, PdeError> {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(epoch_seed, 4, ui as u64, 0));
                let (constants, _own_draw) =
                    optimize_constants(problem, tree, stage.index, const_cfg, &mut rng)?;
                let u = tree.to_expr(&problem.vocab)?;
                let report = energy(problem, &u, &constants, stage.index, &epoch_colloc)?;
                Ok(CandidateOutcome { constants, report })
            })
            .collect::<Result<_, _>>()?;

        // Memory updates in sample order (deterministic merge).
        let mut epoch_best = f64::NEG_INFINITY;
        let mut mean_reward = 0.0;
        for (i, r) in rollouts.iter().enumerate() {
            let o = &outcomes[rollout_unique[i]];
            epoch_best = epoch_best.max(o.report.reward);
            mean_reward += o.report.reward;
            let mut tree = r.tree.clone();
            tree.constants = o.constants.clone();
            memory.insert(problem, &problem.vocab, tree, o.report.reward, stage.index);
        }
        mean_reward /= rollouts.len() as f64;
        stage_best = stage_best.max(epoch_best);
        debug_assert!(memory.check_invariants().is_ok());

        // Rank-based rewards on the shared draw, then normalization.
        let energies: Vec<f64> = (0..rollouts.len())
            .map(|i| outcomes[rollout_unique[i]].report.e)
            .collect();
        let mut rewards = rank_rewards(&energies);
        normalize_rewards(&mut rewards);
        let weights = depth_weights(&rollouts.iter().map(|r| r.depth).collect::<Vec<_>>());

        // Differentiable losses on one tape.
        let mut grads;
        {
            let mut tape = Tape::new();
            let params = policy.insert_params(&mut tape, true);
            let mut scores = Vec::with_capacity(rollouts.len());
            for r in &rollouts {
                scores.push(score_sequence(policy, &mut tape, &params, &r.tree.tokens, &stage.allowed)?);
            }
            let mut total =
                build_policy_loss(&mut tape, &scores, &weights, &rewards, cfg.lambda_ent)?;

            if memory.best_reward().unwrap_or(0.0) > cfg.imitation_trigger {
                let mut entry_scores = Vec::new();
                let mut entry_rewards = Vec::new();
                for e in memory.entries() {
                    match score_sequence(policy, &mut tape, &params, &e.tree.tokens, &stage.allowed)
                    {
                        Ok(s) => {
                            entry_scores.push(s);
                            entry_rewards.push(e.reward);
                        }
                        Err(PolicyError::InvalidTrajectory { token, step }) => {
                            log::warn!(
                                "memory entry invalid under stage {} vocabulary (token {token} at step {step}); skipped",
                                stage.index
                            );
                        }
                        Err(other) => return Err(other.into()),
                    }
                }
                if !entry_scores.is_empty() {
                    let alphas = imitation_weights(&entry_rewards, cfg.imitation_tau);
                    let imit = build_imitation_loss(&mut tape, &entry_scores, &alphas)?;
                    let weighted = tape.scale(imit, cfg.lambda_imit);
                    total = tape.add(total, weighted)?;
                }
            }

            tape.backward(total)?;
            grads = params
                .ordered
                .iter()
                .map(|&id| tape.grad(id).map(|g| g.to_vec()).unwrap_or_default())
                .collect::<Vec<_>>();
        }

        grad_clip(&mut grads, cfg.grad_clip);
        opt.adam_step(&mut policy.params, &grads);
        opt.plateau_decay(stage_best);

        if epoch % cfg.refine_every == 0 {
            refine_memory(
                problem,
                memory,
                stage.index,
                ConstOptConfig { steps: cfg.const_refine_steps, lr: cfg.const_lr },
                mix_seed(cfg.seed, 5, stage.index as u64, epoch as u64),
            )?;
            stage_best = stage_best.max(memory.best_reward().unwrap_or(f64::NEG_INFINITY));
        }

        let record = EpochRecord {
            epoch: *global_epoch,
            stage: stage.index,
            best_reward: stage_best,
            mean_reward,
            mean_entropy: {
                let steps: usize = rollouts.iter().map(|r| r.entropies.len()).sum();
                let total: f64 = rollouts.iter().flat_map(|r| r.entropies.iter()).sum();
                total / steps.max(1) as f64
            },
            lr: opt.lr,
        };
        sink(&record);

        if stage_should_advance(epoch, stage_best, cfg) {
            advanced_on_reward = stage_best > cfg.stage_advance_reward;
            break;
        }
    }

    Ok(StageReport { stage: stage.index, epochs, best_reward: stage_best, advanced_on_reward })
}

/// Execute the staged curriculum on one shared policy and report the best
/// discovered expression with its metrics.
pub fn run_curriculum(
    problem: &PdeProblem,
    policy_cfg: PolicyConfig,
    cfg: &TrainerConfig,
) -> Result<RunResult, TrainerError> {
    run_curriculum_with(problem, policy_cfg, cfg, &mut |_| {})
}

/// As [`run_curriculum`], forwarding each epoch record to `sink` as it is
/// produced.
pub fn run_curriculum_with(
    problem: &PdeProblem,
    policy_cfg: PolicyConfig,
    cfg: &TrainerConfig,
    sink: &mut dyn FnMut(&EpochRecord),
) -> Result<RunResult, TrainerError> {
    run_curriculum_artifacts(problem, policy_cfg, cfg, None, sink).map(|(r, _, _)| r)
}

/// Full-artifact variant: also hands back the trained policy and the final
/// memory so callers can persist them. `forced_stage` restricts the run to
/// one curriculum stage (debugging surface).
pub fn run_curriculum_artifacts(
    problem: &PdeProblem,
    policy_cfg: PolicyConfig,
    cfg: &TrainerConfig,
    forced_stage: Option<u8>,
    sink: &mut dyn FnMut(&EpochRecord),
) -> Result<(RunResult, SymFormer, TopKMemory), TrainerError> {
    let mut init_rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 0, 0, 0));
    let mut policy = SymFormer::new(policy_cfg, problem.vocab.clone(), &mut init_rng)?;
    let test_points = draw_test_points(problem, cfg.n_test_points, cfg.seed);
    let mut memory = TopKMemory::new(
        cfg.memory_capacity,
        cfg.delta_structural,
        cfg.delta_behavioral,
        test_points,
    );
    let mut opt = OptimizerState::new(
        &policy.params,
        AdamConfig::standard(cfg.policy_lr),
        cfg.plateau_factor,
        cfg.plateau_patience,
    );

    let mut history = Vec::new();
    let mut stage_epochs = Vec::new();
    let mut global_epoch = 0usize;

    let stage_indices: Vec<u8> = match forced_stage {
        Some(s) => vec![s.clamp(1, problem.stage_count())],
        None => (1..=problem.stage_count()).collect(),
    };

    let refine_cfg = ConstOptConfig { steps: cfg.const_refine_steps, lr: cfg.const_lr };
    for &index in &stage_indices {
        let stage = CurriculumStage::new(problem, index);
        if index > 1 && forced_stage.is_none() {
            // Stage transition: re-validate surviving entries and refine
            // their constants under the new stage energy.
            let dropped = memory.revalidate(&problem.vocab);
            if dropped > 0 {
                log::warn!("{dropped} memory entries dropped at stage {index} transition");
            }
            refine_memory(problem, &mut memory, index, refine_cfg, mix_seed(cfg.seed, 6, index as u64, 0))?;
            opt.reset_plateau();
        }
        let mut record_sink = |r: &EpochRecord| {
            history.push(*r);
            sink(r);
        };
        let report = train_stage(
            problem,
            &stage,
            &mut policy,
            &mut memory,
            &mut opt,
            cfg,
            &mut global_epoch,
            &mut record_sink,
        )?;
        stage_epochs.push(report.epochs);
    }

    // Final refinement so reported constants get the long schedule.
    let final_stage = *stage_indices.last().expect("at least one stage");
    refine_memory(problem, &mut memory, final_stage, refine_cfg, mix_seed(cfg.seed, 6, 99, 0))?;

    let best = match memory.best() {
        Some(entry) if problem.analytic.is_some() => {
            let tree = entry.tree.clone();
            let mse = mse_tree(problem, &tree)?;
            let srr = srr_check(problem, &tree)?;
            Some(BestSolution { tree, reward: entry.reward, mse, srr })
        }
        Some(entry) => Some(BestSolution {
            tree: entry.tree.clone(),
            reward: entry.reward,
            mse: f64::NAN,
            srr: false,
        }),
        None => None,
    };

    let result = RunResult {
        problem: problem.name.clone(),
        seed: cfg.seed,
        best,
        stage_epochs,
        history,
    };
    Ok((result, policy, memory))
}
