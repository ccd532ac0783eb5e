//! Constant folding and light normalization for skeleton comparison.
//!
//! This is deliberately not a general simplifier: it evaluates all-constant
//! subtrees, folds multiplicative constant coefficients (treating negation
//! and division by a constant as part of the coefficient), and drops additive
//! zeros — exactly enough to reduce printed predictions like
//! `(abs(y) + ((-0.0 + abs(x)) - (-0.2436 * (t / 0.2436))))` to
//! `abs(x) + abs(y) + t`. Coefficients within `FOLD_EPS` of 0 or +-1 are
//! recognized as exact.

use std::sync::Arc;

use crate::expr::ast::{BinaryOp, Expr, UnaryOp};
use crate::expr::canonical::canonical_tokens_of_expr;
use crate::expr::tree::ExprTree;
use crate::expr::vocab::{TokenId, Vocabulary};
use crate::expr::ExprError;

/// Tolerance for recognizing folded coefficients as 0 or +-1.
pub const FOLD_EPS: f64 = 1e-6;

/// Replace constant slots with their literal values.
pub fn inline_constants(expr: &Arc<Expr>, constants: &[f64]) -> Arc<Expr> {
    match &**expr {
        Expr::Slot(i) => Expr::num(constants.get(*i).copied().unwrap_or(f64::NAN)),
        Expr::Num(_) | Expr::Var(_) => expr.clone(),
        Expr::Unary(op, a) => Arc::new(Expr::Unary(*op, inline_constants(a, constants))),
        Expr::Binary(op, a, b) => Arc::new(Expr::Binary(
            *op,
            inline_constants(a, constants),
            inline_constants(b, constants),
        )),
    }
}

fn as_num(e: &Expr) -> Option<f64> {
    match e {
        Expr::Num(v) => Some(*v),
        _ => None,
    }
}

/// Bottom-up normalization pass.
pub fn skeleton_simplify(expr: &Arc<Expr>) -> Arc<Expr> {
    match &**expr {
        Expr::Num(_) | Expr::Slot(_) | Expr::Var(_) => expr.clone(),
        Expr::Unary(op, a) => {
            let sa = skeleton_simplify(a);
            if let Some(v) = as_num(&sa) {
                let folded = op.apply(v);
                if folded.is_finite() {
                    return Expr::num(folded);
                }
            }
            if *op == UnaryOp::Neg {
                let (coeff, factors) = collect_product(&sa);
                return normalized_product(-coeff, factors);
            }
            Arc::new(Expr::Unary(*op, sa))
        }
        Expr::Binary(op, a, b) => {
            let sa = skeleton_simplify(a);
            let sb = skeleton_simplify(b);
            if let (Some(x), Some(y)) = (as_num(&sa), as_num(&sb)) {
                let folded = op.apply(x, y);
                if folded.is_finite() {
                    return Expr::num(folded);
                }
            }
            match op {
                BinaryOp::Add | BinaryOp::Sub => {
                    let mut terms = Vec::new();
                    collect_sum(&Arc::new(Expr::Binary(*op, sa, sb)), 1.0, &mut terms);
                    let mut num_acc = 0.0;
                    let mut kept: Vec<Arc<Expr>> = Vec::new();
                    for (sign, term) in terms {
                        let (coeff, factors) = collect_product(&term);
                        let coeff = sign * coeff;
                        if factors.is_empty() {
                            num_acc += coeff;
                        } else if coeff.abs() >= FOLD_EPS {
                            kept.push(normalized_product(coeff, factors));
                        }
                    }
                    if num_acc.abs() >= FOLD_EPS {
                        kept.push(Expr::num(num_acc));
                    }
                    match kept.len() {
                        0 => Expr::num(0.0),
                        _ => {
                            let mut it = kept.into_iter();
                            let first = it.next().unwrap();
                            it.fold(first, |acc, x| Arc::new(Expr::Binary(BinaryOp::Add, acc, x)))
                        }
                    }
                }
                BinaryOp::Mul | BinaryOp::Div => {
                    let node = Arc::new(Expr::Binary(*op, sa, sb));
                    let (coeff, factors) = collect_product(&node);
                    normalized_product(coeff, factors)
                }
                BinaryOp::Max => Arc::new(Expr::Binary(BinaryOp::Max, sa, sb)),
            }
        }
    }
}

/// Split a term into (numeric coefficient, non-numeric factors), unwrapping
/// nested multiplication, negation, and division by a nonzero literal.
fn collect_product(expr: &Arc<Expr>) -> (f64, Vec<Arc<Expr>>) {
    let mut coeff = 1.0;
    let mut factors = Vec::new();
    fn walk(e: &Arc<Expr>, coeff: &mut f64, factors: &mut Vec<Arc<Expr>>) {
        match &**e {
            Expr::Num(v) => *coeff *= v,
            Expr::Unary(UnaryOp::Neg, a) => {
                *coeff = -*coeff;
                walk(a, coeff, factors);
            }
            Expr::Binary(BinaryOp::Mul, a, b) => {
                walk(a, coeff, factors);
                walk(b, coeff, factors);
            }
            Expr::Binary(BinaryOp::Div, a, b) => {
                if let Some(v) = as_num(b) {
                    if v.abs() >= FOLD_EPS {
                        *coeff /= v;
                        walk(a, coeff, factors);
                        return;
                    }
                }
                factors.push(e.clone());
            }
            _ => factors.push(e.clone()),
        }
    }
    walk(expr, &mut coeff, &mut factors);
    (coeff, factors)
}

fn normalized_product(coeff: f64, factors: Vec<Arc<Expr>>) -> Arc<Expr> {
    if factors.is_empty() {
        return Expr::num(coeff);
    }
    if coeff.abs() < FOLD_EPS {
        return Expr::num(0.0);
    }
    let mut it = factors.into_iter();
    let first = it.next().unwrap();
    let product = it.fold(first, |acc, x| Arc::new(Expr::Binary(BinaryOp::Mul, acc, x)));
    if (coeff - 1.0).abs() < FOLD_EPS {
        product
    } else if (coeff + 1.0).abs() < FOLD_EPS {
        Arc::new(Expr::Unary(UnaryOp::Neg, product))
    } else {
        Arc::new(Expr::Binary(BinaryOp::Mul, Expr::num(coeff), product))
    }
}

fn collect_sum(expr: &Arc<Expr>, sign: f64, out: &mut Vec<(f64, Arc<Expr>)>) {
    match &**expr {
        Expr::Binary(BinaryOp::Add, a, b) => {
            collect_sum(a, sign, out);
            collect_sum(b, sign, out);
        }
        Expr::Binary(BinaryOp::Sub, a, b) => {
            collect_sum(a, sign, out);
            collect_sum(b, -sign, out);
        }
        Expr::Unary(UnaryOp::Neg, a) => collect_sum(a, -sign, out),
        _ => out.push((sign, expr.clone())),
    }
}

/// Skeleton of a tree: inline constants, simplify, canonicalize. Constant
/// leaves all render as the placeholder, so skeleton equality treats every
/// constant as a wildcard.
pub fn skeleton(vocab: &Vocabulary, tree: &ExprTree) -> Result<Vec<TokenId>, ExprError> {
    let expr = tree.to_expr(vocab)?;
    let inlined = inline_constants(&expr, &tree.constants);
    Ok(canonical_tokens_of_expr(vocab, &skeleton_simplify(&inlined)))
}
