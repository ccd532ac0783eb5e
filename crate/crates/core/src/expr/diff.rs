//! Exact symbolic differentiation.
//!
//! Derivatives compose (call twice for second derivatives). Kinks use the
//! conventions sign(0) = 0 and step(0) = 0, which are harmless under Monte
//! Carlo point sampling. Differentiation works with respect to either a
//! named variable or a constant slot; the latter is what drives gradient
//! descent on a tree's constants.

use std::sync::Arc;

use crate::expr::ast::{BinaryOp, Expr, UnaryOp};
use crate::expr::tree::{expr_to_tree, ExprTree};
use crate::expr::vocab::Vocabulary;
use crate::expr::ExprError;

/// What to differentiate with respect to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Wrt<'a> {
    Var(&'a str),
    Slot(usize),
}

pub fn diff(expr: &Arc<Expr>, wrt: Wrt<'_>) -> Arc<Expr> {
    match &**expr {
        Expr::Num(_) => Expr::num(0.0),
        Expr::Slot(i) => match wrt {
            Wrt::Slot(j) if *i == j => Expr::num(1.0),
            _ => Expr::num(0.0),
        },
        Expr::Var(name) => match wrt {
            Wrt::Var(v) if name == v => Expr::num(1.0),
            _ => Expr::num(0.0),
        },
        Expr::Unary(op, a) => {
            let da = diff(a, wrt);
            let outer = match op {
                UnaryOp::Sin => Expr::unary(UnaryOp::Cos, a.clone()),
                UnaryOp::Cos => Expr::neg(Expr::unary(UnaryOp::Sin, a.clone())),
                UnaryOp::Exp => Expr::unary(UnaryOp::Exp, a.clone()),
                UnaryOp::Sqrt => {
                    // 1 / (2 sqrt(a))
                    return Expr::div(
                        da,
                        Expr::mul(Expr::num(2.0), Expr::unary(UnaryOp::Sqrt, a.clone())),
                    );
                }
                UnaryOp::Square => Expr::mul(Expr::num(2.0), a.clone()),
                UnaryOp::Neg => return Expr::neg(da),
                UnaryOp::Abs => Expr::unary(UnaryOp::Sign, a.clone()),
                UnaryOp::Relu => Expr::unary(UnaryOp::Step, a.clone()),
                // Piecewise-constant almost everywhere.
                UnaryOp::Sign | UnaryOp::Step => return Expr::num(0.0),
            };
            Expr::mul(outer, da)
        }
        Expr::Binary(op, a, b) => {
            let da = diff(a, wrt);
            let db = diff(b, wrt);
            match op {
                BinaryOp::Add => Expr::add(da, db),
                BinaryOp::Sub => Expr::sub(da, db),
                BinaryOp::Mul => {
                    Expr::add(Expr::mul(da, b.clone()), Expr::mul(a.clone(), db))
                }
                BinaryOp::Div => {
                    // (da*b - a*db) / b^2
                    Expr::div(
                        Expr::sub(Expr::mul(da, b.clone()), Expr::mul(a.clone(), db)),
                        Expr::unary(UnaryOp::Square, b.clone()),
                    )
                }
                BinaryOp::Max => {
                    // Selection by the active branch; ties get derivative 0.
                    let sel_a = Expr::unary(UnaryOp::Step, Expr::sub(a.clone(), b.clone()));
                    let sel_b = Expr::unary(UnaryOp::Step, Expr::sub(b.clone(), a.clone()));
                    Expr::add(Expr::mul(sel_a, da), Expr::mul(sel_b, db))
                }
            }
        }
    }
}

/// Tree-level differentiation: parse, differentiate, flatten back to prefix
/// form. Slot identity is preserved by differentiating the semantic form and
/// leaving slot leaves in place.
pub fn diff_tree(vocab: &Vocabulary, tree: &ExprTree, var: &str) -> Result<ExprTree, ExprError> {
    let expr = tree.to_expr(vocab)?;
    let d = diff(&expr, Wrt::Var(var));
    expr_to_tree(vocab, &d, &tree.constants)
}
