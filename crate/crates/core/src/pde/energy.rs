//! Residual instantiation, collocation sampling, Monte Carlo energies, and
//! the PDE-based reward.

use std::sync::Arc;

use rand::Rng;

use crate::expr::diff::{diff, Wrt};
use crate::expr::{CompiledExpr, EvalScratch, Expr};
use crate::pde::{BoundaryCondition, PdeError, PdeProblem};

/// Collocation points in the problem's point layout (spatial, then t, then
/// kappa when present). Stage-1/2 sampling stores kappa = 1; initial points
/// store t = 0.
#[derive(Debug, Clone, Default)]
pub struct CollocationSet {
    pub interior: Vec<Vec<f64>>,
    pub boundary: Vec<Vec<f64>>,
    pub initial: Vec<Vec<f64>>,
}

/// Energy components of one candidate on one collocation draw.
#[derive(Debug, Clone, Copy)]
pub struct EnergyReport {
    /// Total stage energy; infinite for the non-finite sentinel.
    pub e: f64,
    pub l_pde: f64,
    pub l_bc: f64,
    pub l_ic: f64,
    pub reward: f64,
    pub finite: bool,
}

impl EnergyReport {
    pub fn sentinel() -> Self {
        Self {
            e: f64::INFINITY,
            l_pde: f64::INFINITY,
            l_bc: f64::INFINITY,
            l_ic: f64::INFINITY,
            reward: 0.0,
            finite: false,
        }
    }
}

/// Reward 1/(1 + sqrt(E)); the non-finite sentinel maps to 0.
pub fn reward(e: f64) -> f64 {
    if !e.is_finite() {
        return 0.0;
    }
    debug_assert!(e >= 0.0, "energy must be nonnegative");
    1.0 / (1.0 + e.sqrt())
}

/// Substitute a candidate and its exact symbolic derivatives into a
/// residual template. Placeholders: `u` is the candidate; `u_<suffix>`
/// differentiates once per suffix character (e.g. `u_xx`, `u_t`).
pub fn instantiate_residual(
    problem: &PdeProblem,
    template: &Arc<Expr>,
    u: &Arc<Expr>,
) -> Result<Arc<Expr>, PdeError> {
    let mut map: Vec<(String, Arc<Expr>)> = Vec::new();
    for name in template.free_variables() {
        if name == "u" {
            map.push((name, u.clone()));
        } else if let Some(suffix) = name.strip_prefix("u_") {
            let mut d = u.clone();
            for ch in suffix.chars() {
                let var = ch.to_string();
                let known = problem.spatial_vars.iter().any(|v| *v == var)
                    || (problem.time_dependent && var == "t");
                if !known {
                    return Err(PdeError::BadDerivativePlaceholder(name.clone()));
                }
                d = diff(&d, Wrt::Var(&var));
            }
            map.push((name, d));
        }
    }
    let map_refs: Vec<(&str, Arc<Expr>)> =
        map.iter().map(|(n, e)| (n.as_str(), e.clone())).collect();
    Ok(template.substitute(&map_refs))
}

/// The implicit characteristic residual for Hamilton-Jacobi problems:
/// u + t H(grad u) - t grad(u)^T grad(H)(grad u) - u0(x - t grad(H)(grad u)).
/// Built symbolically so constant gradients stay exact.
pub fn hj_residual_expr(problem: &PdeProblem, u: &Arc<Expr>) -> Result<Arc<Expr>, PdeError> {
    let ham = problem
        .hamiltonian
        .as_ref()
        .expect("hj residual requires a hamiltonian");
    let ic = problem.ic.as_ref().expect("hj residual requires an initial condition");

    let grads: Vec<Arc<Expr>> = problem
        .spatial_vars
        .iter()
        .map(|v| diff(u, Wrt::Var(v)))
        .collect();
    let pmap: Vec<(String, Arc<Expr>)> = grads
        .iter()
        .enumerate()
        .map(|(i, g)| (format!("p{}", i + 1), g.clone()))
        .collect();
    let pmap_refs: Vec<(&str, Arc<Expr>)> =
        pmap.iter().map(|(n, e)| (n.as_str(), e.clone())).collect();

    let h_of_grad = ham.h.substitute(&pmap_refs);
    let dh: Vec<Arc<Expr>> = ham.grad.iter().map(|g| g.substitute(&pmap_refs)).collect();

    let t = Expr::var("t");
    // u0 evaluated at the backtracked foot point x - t grad(H).
    let shift_map: Vec<(String, Arc<Expr>)> = problem
        .spatial_vars
        .iter()
        .zip(&dh)
        .map(|(v, d)| {
            (v.clone(), Expr::sub(Expr::var(v), Expr::mul(t.clone(), d.clone())))
        })
        .collect();
    let shift_refs: Vec<(&str, Arc<Expr>)> =
        shift_map.iter().map(|(n, e)| (n.as_str(), e.clone())).collect();
    let u0_shifted = ic.substitute(&shift_refs);

    let mut p_dot_dh = Expr::num(0.0);
    for (g, d) in grads.iter().zip(&dh) {
        p_dot_dh = Expr::add(p_dot_dh, Expr::mul(g.clone(), d.clone()));
    }

    Ok(Expr::sub(
        Expr::sub(
            Expr::add(u.clone(), Expr::mul(t.clone(), h_of_grad)),
            Expr::mul(t, p_dot_dh),
        ),
        u0_shifted,
    ))
}

/// The interior residual actually trained on: the implicit characteristic
/// loss for Hamilton-Jacobi problems, the instantiated template otherwise.
pub fn interior_residual_expr(
    problem: &PdeProblem,
    u: &Arc<Expr>,
) -> Result<Arc<Expr>, PdeError> {
    if problem.uses_implicit_hj_loss {
        hj_residual_expr(problem, u)
    } else {
        instantiate_residual(problem, &problem.residual_template.clone(), u)
    }
}

/// Boundary residual expression for a candidate.
pub fn boundary_residual_expr(
    problem: &PdeProblem,
    u: &Arc<Expr>,
) -> Result<Arc<Expr>, PdeError> {
    match &problem.bc {
        BoundaryCondition::DirichletAnalytic => {
            let analytic = problem
                .analytic
                .as_ref()
                .ok_or_else(|| PdeError::NoAnalyticSolution(problem.name.clone()))?;
            Ok(Expr::sub(u.clone(), analytic.clone()))
        }
        BoundaryCondition::Template(t) => instantiate_residual(problem, t, u),
    }
}

/// Initial-condition residual u - u0, evaluated at t = 0 points.
pub fn initial_residual_expr(problem: &PdeProblem, u: &Arc<Expr>) -> Option<Arc<Expr>> {
    problem.ic.as_ref().map(|ic| Expr::sub(u.clone(), ic.clone()))
}

/// Uniform collocation sampling per curriculum stage. Stage 1 samples only
/// initial-time points with kappa = 1; stage 2 samples all three sets with
/// kappa = 1; stage 3 draws kappa uniformly from the training range.
/// Time-independent problems sample interior + boundary at every stage.
pub fn sample_collocation(
    problem: &PdeProblem,
    stage: u8,
    rng: &mut impl Rng,
) -> CollocationSet {
    let layout_len = problem.point_layout().len();
    let nd = problem.spatial_dim();
    let t_col = problem.time_dependent.then_some(nd);
    let k_col = problem.param_name.as_ref().map(|_| layout_len - 1);
    let sample_kappa = stage >= 3 && problem.kappa_range.is_some();

    let draw_kappa = |rng: &mut dyn rand::RngCore| -> f64 {
        if sample_kappa {
            let (lo, hi) = problem.kappa_range.unwrap();
            rng.gen_range(lo..hi)
        } else {
            1.0
        }
    };

    let interior_point = |rng: &mut dyn rand::RngCore| -> Vec<f64> {
        let mut p = vec![0.0; layout_len];
        for (i, &(lo, hi)) in problem.domain.iter().enumerate() {
            p[i] = rng.gen_range(lo..hi);
        }
        if let Some(tc) = t_col {
            p[tc] = rng.gen_range(0.0..problem.t_max);
        }
        if let Some(kc) = k_col {
            p[kc] = draw_kappa(rng);
        }
        p
    };

    let mut set = CollocationSet::default();

    if problem.time_dependent && stage == 1 {
        for _ in 0..problem.n_ic {
            let mut p = interior_point(rng);
            p[t_col.unwrap()] = 0.0;
            set.initial.push(p);
        }
        return set;
    }

    for _ in 0..problem.n_pde {
        set.interior.push(interior_point(rng));
    }
    for _ in 0..problem.n_bc {
        let mut p = interior_point(rng);
        let axis = rng.gen_range(0..nd);
        let (lo, hi) = problem.domain[axis];
        p[axis] = if rng.gen_bool(0.5) { lo } else { hi };
        set.boundary.push(p);
    }
    if problem.time_dependent {
        for _ in 0..problem.n_ic {
            let mut p = interior_point(rng);
            p[t_col.unwrap()] = 0.0;
            set.initial.push(p);
        }
    }
    set
}

/// Mean of squared residuals at the given points; `None` when any
/// evaluation is non-finite.
fn mean_square(
    compiled: &CompiledExpr,
    points: &[Vec<f64>],
    constants: &[f64],
    scratch: &mut EvalScratch,
) -> Option<f64> {
    if points.is_empty() {
        return Some(0.0);
    }
    let mut acc = 0.0;
    for p in points {
        let r = compiled.eval(p, constants, scratch);
        if !r.is_finite() {
            return None;
        }
        acc += r * r;
    }
    Some(acc / points.len() as f64)
}

/// Per-point squared residuals for diagnostics and variance estimates.
#[derive(Debug, Clone, Default)]
pub struct EnergyDetail {
    pub pde_sq: Vec<f64>,
    pub bc_sq: Vec<f64>,
    pub ic_sq: Vec<f64>,
}

/// Stage energy of a candidate expression on a collocation draw.
///
/// Stage 1 of a time-dependent problem scores only the initial-condition
/// loss; later stages (and time-independent problems) also score the
/// interior and boundary residuals, weighted by lambda_BC / lambda_IC. Any
/// non-finite evaluation yields the sentinel report (reward 0).
pub fn energy(
    problem: &PdeProblem,
    u: &Arc<Expr>,
    constants: &[f64],
    stage: u8,
    colloc: &CollocationSet,
) -> Result<EnergyReport, PdeError> {
    let layout = problem.point_layout();
    let mut scratch = EvalScratch::default();
    let ic_only = problem.time_dependent && stage == 1;

    let l_ic = if let Some(ic_res) = initial_residual_expr(problem, u) {
        let compiled = CompiledExpr::compile(&ic_res, &layout)?;
        match mean_square(&compiled, &colloc.initial, constants, &mut scratch) {
            Some(v) => v,
            None => return Ok(EnergyReport::sentinel()),
        }
    } else {
        0.0
    };

    if ic_only {
        let e = l_ic;
        return Ok(EnergyReport { e, l_pde: 0.0, l_bc: 0.0, l_ic, reward: reward(e), finite: true });
    }

    let pde_res = interior_residual_expr(problem, u)?;
    let pde_compiled = CompiledExpr::compile(&pde_res, &layout)?;
    let l_pde = match mean_square(&pde_compiled, &colloc.interior, constants, &mut scratch) {
        Some(v) => v,
        None => return Ok(EnergyReport::sentinel()),
    };

    let bc_res = boundary_residual_expr(problem, u)?;
    let bc_compiled = CompiledExpr::compile(&bc_res, &layout)?;
    let l_bc = match mean_square(&bc_compiled, &colloc.boundary, constants, &mut scratch) {
        Some(v) => v,
        None => return Ok(EnergyReport::sentinel()),
    };

    let e = l_pde + problem.lambda_bc * l_bc + problem.lambda_ic * l_ic;
    Ok(EnergyReport { e, l_pde, l_bc, l_ic, reward: reward(e), finite: true })
}

/// As [`energy`], but also returns per-point squared residuals.
pub fn energy_detailed(
    problem: &PdeProblem,
    u: &Arc<Expr>,
    constants: &[f64],
    stage: u8,
    colloc: &CollocationSet,
) -> Result<(EnergyReport, EnergyDetail), PdeError> {
    let layout = problem.point_layout();
    let mut scratch = EvalScratch::default();
    let mut detail = EnergyDetail::default();

    let mut collect = |expr: &Arc<Expr>, points: &[Vec<f64>]| -> Result<Vec<f64>, PdeError> {
        let compiled = CompiledExpr::compile(expr, &layout)?;
        Ok(points
            .iter()
            .map(|p| {
                let r = compiled.eval(p, constants, &mut scratch);
                r * r
            })
            .collect())
    };

    if let Some(ic_res) = initial_residual_expr(problem, u) {
        detail.ic_sq = collect(&ic_res, &colloc.initial)?;
    }
    if !(problem.time_dependent && stage == 1) {
        detail.pde_sq = collect(&interior_residual_expr(problem, u)?, &colloc.interior)?;
        detail.bc_sq = collect(&boundary_residual_expr(problem, u)?, &colloc.boundary)?;
    }
    let report = energy(problem, u, constants, stage, colloc)?;
    Ok((report, detail))
}

/// Mean squared implicit characteristic residual at the given points.
pub fn hj_implicit_residual(
    problem: &PdeProblem,
    u: &Arc<Expr>,
    constants: &[f64],
    points: &[Vec<f64>],
) -> Result<f64, PdeError> {
    assert!(problem.uses_implicit_hj_loss, "problem does not use the implicit loss");
    let expr = hj_residual_expr(problem, u)?;
    let compiled = CompiledExpr::compile(&expr, &problem.point_layout())?;
    let mut scratch = EvalScratch::default();
    Ok(mean_square(&compiled, points, constants, &mut scratch).unwrap_or(f64::INFINITY))
}
