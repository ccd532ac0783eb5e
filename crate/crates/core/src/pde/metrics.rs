//! Numerical and symbolic accuracy metrics.

use std::sync::Arc;

use crate::expr::{skeleton, CompiledExpr, EvalScratch, Expr, ExprTree};
use crate::pde::{PdeError, PdeProblem};

/// Points per spatial axis on the deterministic evaluation grid.
pub const MSE_SPATIAL_POINTS: usize = 64;
/// Time slices on the evaluation grid.
pub const MSE_TIME_SLICES: usize = 16;
/// Parameter values on the evaluation grid (parametric problems).
pub const MSE_KAPPA_VALUES: usize = 8;

/// Threshold on the post-optimization MSE for symbolic recovery.
pub const SRR_MSE_THRESHOLD: f64 = 1e-8;

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![(lo + hi) / 2.0];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// The deterministic evaluation grid in the problem's point layout.
pub fn evaluation_grid(problem: &PdeProblem) -> Vec<Vec<f64>> {
    let mut axes: Vec<Vec<f64>> = problem
        .domain
        .iter()
        .map(|&(lo, hi)| linspace(lo, hi, MSE_SPATIAL_POINTS))
        .collect();
    if problem.time_dependent {
        axes.push(linspace(0.0, problem.t_max, MSE_TIME_SLICES));
    }
    if let Some((lo, hi)) = problem.kappa_range {
        axes.push(linspace(lo, hi, MSE_KAPPA_VALUES));
    }
    let mut points = vec![Vec::new()];
    for axis in &axes {
        let mut next = Vec::with_capacity(points.len() * axis.len());
        for p in &points {
            for &v in axis {
                let mut q = p.clone();
                q.push(v);
                next.push(q);
            }
        }
        points = next;
    }
    points
}

/// Mean squared error of a candidate against the analytic solution on the
/// deterministic grid. Non-finite candidate values give an infinite MSE.
pub fn mse(problem: &PdeProblem, u: &Arc<Expr>, constants: &[f64]) -> Result<f64, PdeError> {
    let analytic = problem
        .analytic
        .as_ref()
        .ok_or_else(|| PdeError::NoAnalyticSolution(problem.name.clone()))?;
    let layout = problem.point_layout();
    let cu = CompiledExpr::compile(u, &layout)?;
    let ca = CompiledExpr::compile(analytic, &layout)?;
    let mut scratch = EvalScratch::default();
    let grid = evaluation_grid(problem);
    let mut acc = 0.0;
    for p in &grid {
        let got = cu.eval(p, constants, &mut scratch);
        let want = ca.eval(p, &[], &mut scratch);
        if !got.is_finite() || !want.is_finite() {
            return Ok(f64::INFINITY);
        }
        let d = got - want;
        acc += d * d;
    }
    Ok(acc / grid.len() as f64)
}

pub fn mse_tree(problem: &PdeProblem, tree: &ExprTree) -> Result<f64, PdeError> {
    let u = tree.to_expr(&problem.vocab)?;
    mse(problem, &u, &tree.constants)
}

/// Symbolic recovery: the candidate's constant-folded skeleton matches the
/// analytic solution's skeleton, and the post-optimization MSE is below
/// 1e-8 (numeric equivalence of the wildcarded constants).
pub fn srr_check(problem: &PdeProblem, tree: &ExprTree) -> Result<bool, PdeError> {
    let analytic_tree = problem.analytic_tree()?;
    let candidate_skel = skeleton(&problem.vocab, tree)?;
    let analytic_skel = skeleton(&problem.vocab, &analytic_tree)?;
    if candidate_skel != analytic_skel {
        return Ok(false);
    }
    Ok(mse_tree(problem, tree)? < SRR_MSE_THRESHOLD)
}
