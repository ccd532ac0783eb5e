//! PDE problems, Monte Carlo residual energies, and evaluation metrics.

pub mod catalog;
pub mod energy;
pub mod metrics;
pub mod problem_file;

pub use energy::{
    energy, energy_detailed, hj_implicit_residual, instantiate_residual, reward,
    sample_collocation, CollocationSet, EnergyDetail, EnergyReport,
};
pub use metrics::{mse, srr_check};
pub use problem_file::{parse_problem, render_problem};

use std::sync::Arc;

use thiserror::Error;

use crate::expr::{Expr, ExprError, ExprTree, Vocabulary};

#[derive(Debug, Clone, Error)]
pub enum PdeError {
    #[error("expression error: {0}")]
    Expr(#[from] ExprError),
    #[error("unknown problem `{0}`; see the catalog listing")]
    UnknownProblem(String),
    #[error("problem file line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("problem `{0}` has no analytic solution registered")]
    NoAnalyticSolution(String),
    #[error("derivative placeholder `{0}` does not name problem variables")]
    BadDerivativePlaceholder(String),
    #[error("operator without a derivative rule: {0}")]
    UnsupportedOperator(String),
    #[error("non-finite evaluation during {0}")]
    NonFinite(&'static str),
}

/// How the boundary residual is formed.
#[derive(Debug, Clone)]
pub enum BoundaryCondition {
    /// u - analytic on the spatial boundary (all catalog problems).
    DirichletAnalytic,
    /// Explicit residual template over `u`, coordinates, and parameters.
    Template(Arc<Expr>),
}

/// Hamiltonian H(p) and its gradient, as expressions over p1..pn,
/// for problems trained with the implicit characteristic loss.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    pub h: Arc<Expr>,
    pub grad: Vec<Arc<Expr>>,
}

/// A PDE problem definition: residual builder, conditions, domain, loss
/// weights, and collocation counts.
#[derive(Debug, Clone)]
pub struct PdeProblem {
    pub name: String,
    pub spatial_vars: Vec<String>,
    pub time_dependent: bool,
    /// Parameter symbol (kappa) when the problem is parametric.
    pub param_name: Option<String>,
    /// Spatial box per variable.
    pub domain: Vec<(f64, f64)>,
    pub t_max: f64,
    pub kappa_range: Option<(f64, f64)>,
    /// Interior residual template over u, derivative placeholders (u_t,
    /// u_x, u_xx, ...), coordinates, and the parameter.
    pub residual_template: Arc<Expr>,
    /// Initial condition u0 (time-dependent problems).
    pub ic: Option<Arc<Expr>>,
    pub bc: BoundaryCondition,
    /// Analytic solution, for metrics only.
    pub analytic: Option<Arc<Expr>>,
    pub hamiltonian: Option<Hamiltonian>,
    pub uses_implicit_hj_loss: bool,
    pub lambda_bc: f64,
    pub lambda_ic: f64,
    pub n_pde: usize,
    pub n_bc: usize,
    pub n_ic: usize,
    /// Generation vocabulary (operators + this problem's terminals).
    pub vocab: Vocabulary,
}

impl PdeProblem {
    /// Point layout for compiled evaluation: spatial vars, then t (if
    /// time-dependent), then the parameter (if parametric). Collocation
    /// points always carry every column; stages control the values.
    pub fn point_layout(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.spatial_vars.iter().map(|s| s.as_str()).collect();
        if self.time_dependent {
            v.push("t");
        }
        if let Some(p) = &self.param_name {
            v.push(p);
        }
        v
    }

    pub fn spatial_dim(&self) -> usize {
        self.spatial_vars.len()
    }

    pub fn is_parametric(&self) -> bool {
        self.param_name.is_some()
    }

    /// The analytic solution as a prefix tree over this problem's
    /// vocabulary (numeric literals become constant slots).
    pub fn analytic_tree(&self) -> Result<ExprTree, PdeError> {
        let expr = self
            .analytic
            .as_ref()
            .ok_or_else(|| PdeError::NoAnalyticSolution(self.name.clone()))?;
        Ok(crate::expr::expr_to_tree(&self.vocab, expr, &[])?)
    }

    /// Number of curriculum stages this problem runs: 1 when
    /// time-independent, 2 when time-dependent, 3 when also parametric.
    pub fn stage_count(&self) -> u8 {
        if !self.time_dependent {
            1
        } else if self.is_parametric() {
            3
        } else {
            2
        }
    }
}
