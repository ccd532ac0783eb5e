//! Gradient refinement of an expression's continuous constants against the
//! stage energy, decoupled from structure search.
//!
//! Gradients dE/dc come from symbolically differentiating each residual with
//! respect to every constant slot (exact, no finite differences) and
//! averaging 2 r dr/dc over the collocation draw.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::optim::{AdamConfig, OptimizerState};
use crate::autodiff::params::ParamSet;
use crate::autodiff::Array;
use crate::expr::diff::{diff, Wrt};
use crate::expr::{CompiledExpr, EvalScratch, Expr, ExprTree};
use crate::pde::energy::{
    boundary_residual_expr, initial_residual_expr, interior_residual_expr, sample_collocation,
};
use crate::pde::{energy, EnergyReport, PdeError, PdeProblem};
use crate::trainer::memory::TopKMemory;

#[derive(Debug, Clone, Copy)]
pub struct ConstOptConfig {
    pub steps: usize,
    pub lr: f64,
}

impl ConstOptConfig {
    /// In-loop refinement: 50 steps at lr 0.02.
    pub fn in_loop() -> Self {
        Self { steps: 50, lr: 0.02 }
    }

    /// Periodic memory refinement: 200 steps at the same rate.
    pub fn refinement() -> Self {
        Self { steps: 200, lr: 0.02 }
    }
}

/// One weighted residual: compiled value, compiled per-slot derivatives, and
/// the point set it averages over.
struct ResidualBlock<'a> {
    weight: f64,
    value: CompiledExpr,
    slot_grads: Vec<CompiledExpr>,
    points: &'a [Vec<f64>],
}

impl ResidualBlock<'_> {
    /// Returns (weighted mean square, d/dc of it); `None` on non-finite.
    fn accumulate(
        &self,
        constants: &[f64],
        grad_out: &mut [f64],
        scratch: &mut EvalScratch,
    ) -> Option<f64> {
        if self.points.is_empty() {
            return Some(0.0);
        }
        let n = self.points.len() as f64;
        let mut acc = 0.0;
        let mut gacc = vec![0.0; grad_out.len()];
        for p in self.points {
            let r = self.value.eval(p, constants, scratch);
            if !r.is_finite() {
                return None;
            }
            acc += r * r;
            for (k, dg) in self.slot_grads.iter().enumerate() {
                let d = dg.eval(p, constants, scratch);
                if !d.is_finite() {
                    return None;
                }
                gacc[k] += 2.0 * r * d;
            }
        }
        for (out, g) in grad_out.iter_mut().zip(&gacc) {
            *out += self.weight * g / n;
        }
        Some(self.weight * acc / n)
    }
}

fn compile_block<'a>(
    expr: &Arc<Expr>,
    weight: f64,
    points: &'a [Vec<f64>],
    layout: &[&str],
    n_slots: usize,
) -> Result<ResidualBlock<'a>, PdeError> {
    let slot_grads = (0..n_slots)
        .map(|k| CompiledExpr::compile(&diff(expr, Wrt::Slot(k)), layout))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ResidualBlock { weight, value: CompiledExpr::compile(expr, layout)?, slot_grads, points })
}

fn build_residual_blocks<'a>(
    problem: &PdeProblem,
    u: &Arc<Expr>,
    stage: u8,
    colloc: &'a crate::pde::CollocationSet,
    n_slots: usize,
) -> Result<Vec<ResidualBlock<'a>>, PdeError> {
    let layout = problem.point_layout();
    let ic_only = problem.time_dependent && stage == 1;
    let mut blocks = Vec::new();
    if let Some(ic_res) = initial_residual_expr(problem, u) {
        let w = if ic_only { 1.0 } else { problem.lambda_ic };
        blocks.push(compile_block(&ic_res, w, &colloc.initial, &layout, n_slots)?);
    }
    if !ic_only {
        let pde_res = interior_residual_expr(problem, u)?;
        blocks.push(compile_block(&pde_res, 1.0, &colloc.interior, &layout, n_slots)?);
        let bc_res = boundary_residual_expr(problem, u)?;
        blocks.push(compile_block(&bc_res, problem.lambda_bc, &colloc.boundary, &layout, n_slots)?);
    }
    Ok(blocks)
}

/// Exact dE/dc of the stage energy at the tree's current constants on the
/// given collocation set (symbolic slot derivatives, no finite differences).
pub fn stage_energy_gradient(
    problem: &PdeProblem,
    tree: &ExprTree,
    stage: u8,
    colloc: &crate::pde::CollocationSet,
) -> Result<Vec<f64>, PdeError> {
    let u = tree.to_expr(&problem.vocab)?;
    let n_slots = tree.constants.len();
    let blocks = build_residual_blocks(problem, &u, stage, colloc, n_slots)?;
    let mut grad = vec![0.0; n_slots];
    let mut scratch = EvalScratch::default();
    for b in &blocks {
        b.accumulate(&tree.constants, &mut grad, &mut scratch)
            .ok_or(PdeError::NonFinite("constant-gradient evaluation"))?;
    }
    Ok(grad)
}

/// Optimize a tree's constants against the stage energy on one collocation
/// draw. Trees without constants are returned unchanged with zero optimizer
/// steps. Returns the best-seen constants (not the last iterate) and the
/// corresponding energy on the optimization draw; a non-finite energy at
/// initialization returns the inputs with the sentinel report.
pub fn optimize_constants(
    problem: &PdeProblem,
    tree: &ExprTree,
    stage: u8,
    config: ConstOptConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, EnergyReport), PdeError> {
    let u = tree.to_expr(&problem.vocab)?;
    let colloc = sample_collocation(problem, stage, rng);
    let n_slots = tree.constants.len();

    if n_slots == 0 {
        let report = energy(problem, &u, &[], stage, &colloc)?;
        return Ok((Vec::new(), report));
    }

    let blocks = build_residual_blocks(problem, &u, stage, &colloc, n_slots)?;

    let eval_energy_and_grad =
        |constants: &[f64], grad: &mut [f64], scratch: &mut EvalScratch| -> Option<f64> {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut e = 0.0;
            for b in &blocks {
                e += b.accumulate(constants, grad, scratch)?;
            }
            Some(e)
        };

    let mut scratch = EvalScratch::default();
    let mut grad = vec![0.0; n_slots];
    let init_e = eval_energy_and_grad(&tree.constants, &mut grad, &mut scratch);
    if init_e.is_none() {
        return Ok((tree.constants.clone(), EnergyReport::sentinel()));
    }

    let mut params = ParamSet::new();
    params.push("constants", Array::new(1, n_slots, tree.constants.clone()));
    let mut opt = OptimizerState::new(&params, AdamConfig::constant_fit(config.lr), 0.9, 10);

    let mut best_e = init_e.unwrap();
    let mut best_c = tree.constants.clone();

    for _ in 0..config.steps {
        opt.adam_step(&mut params, &[grad.clone()]);
        let c = params.tensors[0].array.data().to_vec();
        match eval_energy_and_grad(&c, &mut grad, &mut scratch) {
            Some(e) => {
                if e < best_e {
                    best_e = e;
                    best_c = c;
                }
            }
            // The step left the finite region; keep the best seen so far.
            None => break,
        }
    }

    // Report components at the best constants (same draw).
    let report = energy(problem, &u, &best_c, stage, &colloc)?;
    Ok((best_c, report))
}

/// Re-optimize every memory entry's constants (200-step schedule),
/// re-evaluate rewards, and re-sort. Fingerprints are left at their
/// admission values so pairwise diversity is unaffected; memory never
/// shrinks here.
pub fn refine_memory(
    problem: &PdeProblem,
    memory: &mut TopKMemory,
    stage: u8,
    config: ConstOptConfig,
    seed: u64,
) -> Result<(), PdeError> {
    let mut refined: Vec<(usize, Vec<f64>, f64)> = Vec::new();
    for (i, entry) in memory.entries().iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9e37_79b9));
        let (c, report) = optimize_constants(problem, &entry.tree, stage, config, &mut rng)?;
        refined.push((i, c, report.reward));
    }
    let entries = memory.entries_mut();
    for (i, c, r) in refined {
        entries[i].tree.constants = c;
        entries[i].reward = r;
        entries[i].stage = stage;
    }
    entries.sort_by(|a, b| b.reward.partial_cmp(&a.reward).unwrap_or(std::cmp::Ordering::Equal));
    Ok(())
}
