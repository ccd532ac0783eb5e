//! Structured-text problem definitions.
//!
//! One `key value` pair per line, `#` comments. Expressions are prefix
//! strings (see `parse_prefix_expr`); the residual may reference `u` and
//! derivative placeholders (`u_t`, `u_x`, `u_xx`, ...), Hamiltonians
//! reference `p1..pn`. The built-in catalog is written in this format.
//!
//! ```text
//! name heat2d
//! spatial x y
//! time true
//! param none
//! domain x -1 1
//! domain y -1 1
//! t_max 1
//! residual - u_t + u_xx u_yy
//! ic * sin x cos y
//! bc dirichlet_analytic
//! analytic * * sin x cos y exp * -2.0 t
//! hj none
//! ```

use std::sync::Arc;

use crate::expr::{parse_prefix_expr, Expr, Vocabulary, DEFAULT_BINARY, DEFAULT_UNARY};
use crate::pde::{BoundaryCondition, Hamiltonian, PdeError, PdeProblem};

pub fn parse_problem(text: &str) -> Result<PdeProblem, PdeError> {
    let mut name = None;
    let mut spatial: Vec<String> = Vec::new();
    let mut time_dependent = false;
    let mut param: Option<(String, f64, f64)> = None;
    let mut domains: Vec<(String, f64, f64)> = Vec::new();
    let mut t_max = 1.0;
    let mut residual = None;
    let mut ic: Option<Arc<Expr>> = None;
    let mut bc = BoundaryCondition::DirichletAnalytic;
    let mut analytic: Option<Arc<Expr>> = None;
    let mut hj: Option<Arc<Expr>> = None;
    let mut hj_grad: Vec<Arc<Expr>> = Vec::new();
    let mut lambda_bc = 10.0;
    let mut lambda_ic = 10.0;
    let (mut n_pde, mut n_bc, mut n_ic) = (200usize, 80usize, 80usize);
    let mut binary: Vec<String> = DEFAULT_BINARY.iter().map(|s| s.to_string()).collect();
    let mut unary: Vec<String> = DEFAULT_UNARY.iter().map(|s| s.to_string()).collect();

    let err = |line: usize, reason: &str| PdeError::Malformed { line, reason: reason.to_string() };

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = match line.split_once(char::is_whitespace) {
            Some((k, v)) => (k, v.trim()),
            None => (line, ""),
        };
        let lno = lineno + 1;
        match key {
            "name" => name = Some(value.to_string()),
            "spatial" => {
                spatial = value.split_whitespace().map(|s| s.to_string()).collect();
            }
            "time" => {
                time_dependent = match value {
                    "true" | "1" => true,
                    "false" | "0" => false,
                    _ => return Err(err(lno, "time must be true or false")),
                }
            }
            "param" => {
                if value != "none" {
                    let parts: Vec<&str> = value.split_whitespace().collect();
                    if parts.len() != 3 {
                        return Err(err(lno, "param needs `<symbol> <lo> <hi>` or `none`"));
                    }
                    let lo: f64 = parts[1].parse().map_err(|_| err(lno, "bad param lo"))?;
                    let hi: f64 = parts[2].parse().map_err(|_| err(lno, "bad param hi"))?;
                    if hi <= lo {
                        return Err(err(lno, "param range must be nonempty"));
                    }
                    param = Some((parts[0].to_string(), lo, hi));
                }
            }
            "domain" => {
                let parts: Vec<&str> = value.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(err(lno, "domain needs `<var> <lo> <hi>`"));
                }
                let lo: f64 = parts[1].parse().map_err(|_| err(lno, "bad domain lo"))?;
                let hi: f64 = parts[2].parse().map_err(|_| err(lno, "bad domain hi"))?;
                domains.push((parts[0].to_string(), lo, hi));
            }
            "t_max" => t_max = value.parse().map_err(|_| err(lno, "bad t_max"))?,
            "residual" => residual = Some(parse_prefix_expr(value)?),
            "ic" => {
                if value != "none" {
                    ic = Some(parse_prefix_expr(value)?);
                }
            }
            "bc" => {
                bc = if value == "dirichlet_analytic" {
                    BoundaryCondition::DirichletAnalytic
                } else {
                    BoundaryCondition::Template(parse_prefix_expr(value)?)
                };
            }
            "analytic" => {
                if value != "none" {
                    analytic = Some(parse_prefix_expr(value)?);
                }
            }
            "hj" => {
                if value != "none" {
                    hj = Some(parse_prefix_expr(value)?);
                }
            }
            "hj_grad" => hj_grad.push(parse_prefix_expr(value)?),
            "lambda_bc" => lambda_bc = value.parse().map_err(|_| err(lno, "bad lambda_bc"))?,
            "lambda_ic" => lambda_ic = value.parse().map_err(|_| err(lno, "bad lambda_ic"))?,
            "n_pde" => n_pde = value.parse().map_err(|_| err(lno, "bad n_pde"))?,
            "n_bc" => n_bc = value.parse().map_err(|_| err(lno, "bad n_bc"))?,
            "n_ic" => n_ic = value.parse().map_err(|_| err(lno, "bad n_ic"))?,
            "binary" => binary = value.split_whitespace().map(|s| s.to_string()).collect(),
            "unary" => unary = value.split_whitespace().map(|s| s.to_string()).collect(),
            _ => return Err(err(lno, &format!("unknown key `{key}`"))),
        }
    }

    let name = name.ok_or_else(|| err(0, "missing name"))?;
    if spatial.is_empty() {
        return Err(err(0, "missing spatial variables"));
    }
    let residual = residual.ok_or_else(|| err(0, "missing residual"))?;
    let uses_implicit_hj_loss = hj.is_some();
    let hamiltonian = match hj {
        Some(h) => {
            if hj_grad.len() != spatial.len() {
                return Err(err(0, "hj_grad must appear once per spatial variable"));
            }
            Some(Hamiltonian { h, grad: hj_grad })
        }
        None => None,
    };
    if uses_implicit_hj_loss && ic.is_none() {
        return Err(err(0, "implicit hj loss requires an initial condition"));
    }
    if time_dependent && ic.is_none() {
        return Err(err(0, "time-dependent problems need an initial condition"));
    }

    // Domain box per spatial var, default [-1, 1].
    let domain: Vec<(f64, f64)> = spatial
        .iter()
        .map(|v| {
            domains
                .iter()
                .find(|(dv, _, _)| dv == v)
                .map(|&(_, lo, hi)| (lo, hi))
                .unwrap_or((-1.0, 1.0))
        })
        .collect();

    let mut terminals: Vec<&str> = spatial.iter().map(|s| s.as_str()).collect();
    if time_dependent {
        terminals.push("t");
    }
    if let Some((p, _, _)) = &param {
        terminals.push(p);
    }
    let binary_refs: Vec<&str> = binary.iter().map(|s| s.as_str()).collect();
    let unary_refs: Vec<&str> = unary.iter().map(|s| s.as_str()).collect();
    let vocab = Vocabulary::new(
        &binary_refs,
        &unary_refs,
        &terminals,
        time_dependent.then_some("t"),
        param.as_ref().map(|(p, _, _)| p.as_str()),
    )?;

    Ok(PdeProblem {
        name,
        spatial_vars: spatial,
        time_dependent,
        param_name: param.as_ref().map(|(p, _, _)| p.clone()),
        domain,
        t_max,
        kappa_range: param.as_ref().map(|&(_, lo, hi)| (lo, hi)),
        residual_template: residual,
        ic,
        bc,
        analytic,
        hamiltonian,
        uses_implicit_hj_loss,
        lambda_bc,
        lambda_ic,
        n_pde,
        n_bc,
        n_ic,
        vocab,
    })
}

/// Render a problem back into the file format (template expressions print
/// in prefix form).
pub fn render_problem(p: &PdeProblem) -> String {
    fn prefix_of(e: &Arc<Expr>) -> String {
        fn walk(e: &Expr, out: &mut String) {
            if !out.is_empty() {
                out.push(' ');
            }
            match e {
                Expr::Num(v) => out.push_str(&format!("{v}")),
                Expr::Slot(i) => out.push_str(&format!("c{i}")),
                Expr::Var(n) => out.push_str(n),
                Expr::Unary(op, a) => {
                    out.push_str(op.symbol());
                    walk(a, out);
                }
                Expr::Binary(op, a, b) => {
                    out.push_str(op.symbol());
                    walk(a, out);
                    walk(b, out);
                }
            }
        }
        let mut s = String::new();
        walk(e, &mut s);
        s
    }

    let mut out = String::new();
    out.push_str(&format!("name {}\n", p.name));
    out.push_str(&format!("spatial {}\n", p.spatial_vars.join(" ")));
    out.push_str(&format!("time {}\n", p.time_dependent));
    match (&p.param_name, p.kappa_range) {
        (Some(n), Some((lo, hi))) => out.push_str(&format!("param {n} {lo} {hi}\n")),
        _ => out.push_str("param none\n"),
    }
    for (v, (lo, hi)) in p.spatial_vars.iter().zip(&p.domain) {
        out.push_str(&format!("domain {v} {lo} {hi}\n"));
    }
    out.push_str(&format!("t_max {}\n", p.t_max));
    out.push_str(&format!("residual {}\n", prefix_of(&p.residual_template)));
    match &p.ic {
        Some(ic) => out.push_str(&format!("ic {}\n", prefix_of(ic))),
        None => out.push_str("ic none\n"),
    }
    match &p.bc {
        BoundaryCondition::DirichletAnalytic => out.push_str("bc dirichlet_analytic\n"),
        BoundaryCondition::Template(t) => out.push_str(&format!("bc {}\n", prefix_of(t))),
    }
    match &p.analytic {
        Some(a) => out.push_str(&format!("analytic {}\n", prefix_of(a))),
        None => out.push_str("analytic none\n"),
    }
    match &p.hamiltonian {
        Some(h) => {
            out.push_str(&format!("hj {}\n", prefix_of(&h.h)));
            for g in &h.grad {
                out.push_str(&format!("hj_grad {}\n", prefix_of(g)));
            }
        }
        None => out.push_str("hj none\n"),
    }
    out.push_str(&format!("lambda_bc {}\n", p.lambda_bc));
    out.push_str(&format!("lambda_ic {}\n", p.lambda_ic));
    out.push_str(&format!("n_pde {}\nn_bc {}\nn_ic {}\n", p.n_pde, p.n_bc, p.n_ic));
    out
}
