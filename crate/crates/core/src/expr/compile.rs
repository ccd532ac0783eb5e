//! Flat postorder programs for fast repeated evaluation.
//!
//! Residual expressions get evaluated at hundreds of collocation points per
//! candidate per optimizer step; walking `Arc` trees there is wasteful. A
//! `CompiledExpr` is the postorder instruction list evaluated with a value
//! stack, with variables resolved to point-layout indices at compile time.

use std::sync::Arc;

use crate::expr::ast::{BinaryOp, Expr, UnaryOp};
use crate::expr::ExprError;

#[derive(Debug, Clone, Copy)]
enum Instr {
    Num(f64),
    Slot(usize),
    Var(usize),
    Un(UnaryOp),
    Bin(BinaryOp),
}

#[derive(Debug, Clone)]
pub struct CompiledExpr {
    instrs: Vec<Instr>,
    max_stack: usize,
}

/// Reusable evaluation stack.
#[derive(Debug, Default)]
pub struct EvalScratch {
    stack: Vec<f64>,
}

impl CompiledExpr {
    /// Compile against a variable layout: `vars[i]` is the name bound to
    /// `point[i]` at evaluation time.
    pub fn compile(expr: &Arc<Expr>, vars: &[&str]) -> Result<Self, ExprError> {
        let mut instrs = Vec::new();
        fn walk(e: &Expr, vars: &[&str], out: &mut Vec<Instr>) -> Result<(), ExprError> {
            match e {
                Expr::Num(v) => out.push(Instr::Num(*v)),
                Expr::Slot(i) => out.push(Instr::Slot(*i)),
                Expr::Var(n) => {
                    let idx = vars
                        .iter()
                        .position(|v| v == n)
                        .ok_or_else(|| ExprError::UnboundVariable(n.clone()))?;
                    out.push(Instr::Var(idx));
                }
                Expr::Unary(op, a) => {
                    walk(a, vars, out)?;
                    out.push(Instr::Un(*op));
                }
                Expr::Binary(op, a, b) => {
                    walk(a, vars, out)?;
                    walk(b, vars, out)?;
                    out.push(Instr::Bin(*op));
                }
            }
            Ok(())
        }
        walk(expr, vars, &mut instrs)?;
        let mut depth = 0usize;
        let mut max_stack = 0usize;
        for i in &instrs {
            match i {
                Instr::Num(_) | Instr::Slot(_) | Instr::Var(_) => depth += 1,
                Instr::Un(_) => {}
                Instr::Bin(_) => depth -= 1,
            }
            max_stack = max_stack.max(depth);
        }
        Ok(Self { instrs, max_stack })
    }

    /// Evaluate at one point. Returns a possibly non-finite value; the
    /// division guard and domain errors surface as NaN/inf, never a panic.
    pub fn eval(&self, point: &[f64], constants: &[f64], scratch: &mut EvalScratch) -> f64 {
        let stack = &mut scratch.stack;
        stack.clear();
        stack.reserve(self.max_stack);
        for instr in &self.instrs {
            match instr {
                Instr::Num(v) => stack.push(*v),
                Instr::Slot(i) => stack.push(constants.get(*i).copied().unwrap_or(f64::NAN)),
                Instr::Var(i) => stack.push(point[*i]),
                Instr::Un(op) => {
                    let a = stack.pop().expect("unary operand");
                    stack.push(op.apply(a));
                }
                Instr::Bin(op) => {
                    let b = stack.pop().expect("right operand");
                    let a = stack.pop().expect("left operand");
                    stack.push(op.apply(a, b));
                }
            }
        }
        debug_assert_eq!(stack.len(), 1);
        stack[0]
    }
}
