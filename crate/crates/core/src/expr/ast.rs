//! Semantic expression trees: evaluation and substitution.
//!
//! `Expr` is the recursive form used for calculus and residual assembly.
//! Leaves are literal numbers, positional constant slots, or named variables.
//! Subtrees are shared via `Arc` so derivative construction does not clone
//! operands.

use std::fmt;
use std::sync::Arc;

use crate::expr::ExprError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Square,
    Neg,
    Abs,
    Relu,
    /// sign(x) with sign(0) = 0; only produced by differentiation.
    Sign,
    /// step(x) = 1 for x > 0, else 0; only produced by differentiation.
    Step,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    /// Pointwise maximum; used by guarded Hamiltonian gradients.
    Max,
}

impl UnaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Exp => "exp",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Square => "square",
            UnaryOp::Neg => "neg",
            UnaryOp::Abs => "abs",
            UnaryOp::Relu => "relu",
            UnaryOp::Sign => "sign",
            UnaryOp::Step => "step",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        Some(match s {
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            "exp" => UnaryOp::Exp,
            "sqrt" => UnaryOp::Sqrt,
            "square" => UnaryOp::Square,
            "neg" => UnaryOp::Neg,
            "abs" => UnaryOp::Abs,
            "relu" => UnaryOp::Relu,
            "sign" => UnaryOp::Sign,
            "step" => UnaryOp::Step,
            _ => return None,
        })
    }

    pub fn apply(self, a: f64) -> f64 {
        match self {
            UnaryOp::Sin => a.sin(),
            UnaryOp::Cos => a.cos(),
            UnaryOp::Exp => a.exp(),
            UnaryOp::Sqrt => a.sqrt(),
            UnaryOp::Square => a * a,
            UnaryOp::Neg => -a,
            UnaryOp::Abs => a.abs(),
            UnaryOp::Relu => {
                if a > 0.0 {
                    a
                } else {
                    0.0
                }
            }
            UnaryOp::Sign => {
                if a > 0.0 {
                    1.0
                } else if a < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            UnaryOp::Step => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Denominators smaller than this in magnitude produce the non-finite marker
/// instead of blowing up; callers map the marker to reward 0.
pub const DIV_GUARD: f64 = 1e-12;

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Max => "max",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        Some(match s {
            "+" => BinaryOp::Add,
            "-" => BinaryOp::Sub,
            "*" => BinaryOp::Mul,
            "/" => BinaryOp::Div,
            "max" => BinaryOp::Max,
            _ => return None,
        })
    }

    pub fn commutative(self) -> bool {
        matches!(self, BinaryOp::Add | BinaryOp::Mul | BinaryOp::Max)
    }

    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => {
                if b.abs() < DIV_GUARD {
                    f64::NAN
                } else {
                    a / b
                }
            }
            BinaryOp::Max => a.max(b),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    /// Literal value, produced by parsing inline decimals or by folding.
    Num(f64),
    /// The i-th constant placeholder; its value lives in a constants array.
    Slot(usize),
    Var(String),
    Unary(UnaryOp, Arc<Expr>),
    Binary(BinaryOp, Arc<Expr>, Arc<Expr>),
}

/// Variable bindings for evaluation. Lookups are linear; point dimension is
/// tiny (at most spatial vars + t + kappa).
#[derive(Debug, Clone, Default)]
pub struct PointAssignment {
    entries: Vec<(String, f64)>,
}

impl PointAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: &[(&str, f64)]) -> Self {
        Self { entries: pairs.iter().map(|(n, v)| (n.to_string(), *v)).collect() }
    }

    pub fn set(&mut self, name: &str, value: f64) {
        if let Some(e) = self.entries.iter_mut().find(|(n, _)| n == name) {
            e.1 = value;
        } else {
            self.entries.push((name.to_string(), value));
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }
}

impl Expr {
    pub fn num(v: f64) -> Arc<Expr> {
        Arc::new(Expr::Num(v))
    }

    pub fn slot(i: usize) -> Arc<Expr> {
        Arc::new(Expr::Slot(i))
    }

    pub fn var(name: &str) -> Arc<Expr> {
        Arc::new(Expr::Var(name.to_string()))
    }

    fn as_num(&self) -> Option<f64> {
        match self {
            Expr::Num(v) => Some(*v),
            _ => None,
        }
    }

    /// Constructors below fold literal zeros/ones so derivative trees stay
    /// compact. They never touch `Slot` leaves.
    pub fn add(a: Arc<Expr>, b: Arc<Expr>) -> Arc<Expr> {
        match (a.as_num(), b.as_num()) {
            (Some(x), Some(y)) => Expr::num(x + y),
            (Some(0.0), _) => b,
            (_, Some(0.0)) => a,
            _ => Arc::new(Expr::Binary(BinaryOp::Add, a, b)),
        }
    }

    pub fn sub(a: Arc<Expr>, b: Arc<Expr>) -> Arc<Expr> {
        match (a.as_num(), b.as_num()) {
            (Some(x), Some(y)) => Expr::num(x - y),
            (_, Some(0.0)) => a,
            (Some(0.0), _) => Expr::neg(b),
            _ => Arc::new(Expr::Binary(BinaryOp::Sub, a, b)),
        }
    }

    pub fn mul(a: Arc<Expr>, b: Arc<Expr>) -> Arc<Expr> {
        match (a.as_num(), b.as_num()) {
            (Some(x), Some(y)) => Expr::num(x * y),
            (Some(0.0), _) | (_, Some(0.0)) => Expr::num(0.0),
            (Some(1.0), _) => b,
            (_, Some(1.0)) => a,
            _ => Arc::new(Expr::Binary(BinaryOp::Mul, a, b)),
        }
    }

    pub fn div(a: Arc<Expr>, b: Arc<Expr>) -> Arc<Expr> {
        match (a.as_num(), b.as_num()) {
            (Some(0.0), _) => Expr::num(0.0),
            (_, Some(1.0)) => a,
            _ => Arc::new(Expr::Binary(BinaryOp::Div, a, b)),
        }
    }

    pub fn max(a: Arc<Expr>, b: Arc<Expr>) -> Arc<Expr> {
        Arc::new(Expr::Binary(BinaryOp::Max, a, b))
    }

    pub fn neg(a: Arc<Expr>) -> Arc<Expr> {
        match &*a {
            Expr::Num(v) => Expr::num(-v),
            Expr::Unary(UnaryOp::Neg, inner) => inner.clone(),
            _ => Arc::new(Expr::Unary(UnaryOp::Neg, a)),
        }
    }

    pub fn unary(op: UnaryOp, a: Arc<Expr>) -> Arc<Expr> {
        if op == UnaryOp::Neg {
            return Expr::neg(a);
        }
        Arc::new(Expr::Unary(op, a))
    }

    pub fn binary(op: BinaryOp, a: Arc<Expr>, b: Arc<Expr>) -> Arc<Expr> {
        match op {
            BinaryOp::Add => Expr::add(a, b),
            BinaryOp::Sub => Expr::sub(a, b),
            BinaryOp::Mul => Expr::mul(a, b),
            BinaryOp::Div => Expr::div(a, b),
            BinaryOp::Max => Expr::max(a, b),
        }
    }

    /// Recursive evaluation. Non-finite arithmetic flows through as the
    /// non-finite marker (NaN/inf) rather than an error; an unbound variable
    /// is a contract violation and errors.
    pub fn eval(&self, point: &PointAssignment, constants: &[f64]) -> Result<f64, ExprError> {
        Ok(match self {
            Expr::Num(v) => *v,
            Expr::Slot(i) => *constants
                .get(*i)
                .ok_or(ExprError::MissingConstant { slot: *i, have: constants.len() })?,
            Expr::Var(name) => {
                point.get(name).ok_or_else(|| ExprError::UnboundVariable(name.clone()))?
            }
            Expr::Unary(op, a) => op.apply(a.eval(point, constants)?),
            Expr::Binary(op, a, b) => {
                op.apply(a.eval(point, constants)?, b.eval(point, constants)?)
            }
        })
    }

    /// Replace variables by expressions. Variables absent from `map` are kept.
    pub fn substitute(self: &Arc<Expr>, map: &[(&str, Arc<Expr>)]) -> Arc<Expr> {
        match &**self {
            Expr::Var(name) => {
                for (n, e) in map {
                    if n == name {
                        return e.clone();
                    }
                }
                self.clone()
            }
            Expr::Num(_) | Expr::Slot(_) => self.clone(),
            Expr::Unary(op, a) => {
                let na = a.substitute(map);
                if Arc::ptr_eq(&na, a) {
                    self.clone()
                } else {
                    Expr::unary(*op, na)
                }
            }
            Expr::Binary(op, a, b) => {
                let na = a.substitute(map);
                let nb = b.substitute(map);
                if Arc::ptr_eq(&na, a) && Arc::ptr_eq(&nb, b) {
                    self.clone()
                } else {
                    Arc::new(Expr::Binary(*op, na, nb))
                }
            }
        }
    }

    /// Number of constant slots referenced (max slot index + 1).
    pub fn slot_count(&self) -> usize {
        match self {
            Expr::Slot(i) => i + 1,
            Expr::Num(_) | Expr::Var(_) => 0,
            Expr::Unary(_, a) => a.slot_count(),
            Expr::Binary(_, a, b) => a.slot_count().max(b.slot_count()),
        }
    }

    /// Free variable names in first-occurrence order.
    pub fn free_variables(&self) -> Vec<String> {
        let mut out = Vec::new();
        fn walk(e: &Expr, out: &mut Vec<String>) {
            match e {
                Expr::Var(n) => {
                    if !out.iter().any(|x| x == n) {
                        out.push(n.clone());
                    }
                }
                Expr::Unary(_, a) => walk(a, out),
                Expr::Binary(_, a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                _ => {}
            }
        }
        walk(self, &mut out);
        out
    }
}

impl fmt::Display for Expr {
    /// Infix rendering, parenthesized like the printed benchmark solutions,
    /// e.g. `(sin(x) * (exp((-2 * t)) * cos(y)))`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Slot(i) => write!(f, "c{i}"),
            Expr::Var(n) => write!(f, "{n}"),
            Expr::Unary(UnaryOp::Neg, a) => write!(f, "(-{a})"),
            Expr::Unary(UnaryOp::Square, a) => write!(f, "(({a})^2)"),
            Expr::Unary(op, a) => write!(f, "{}({a})", op.symbol()),
            Expr::Binary(BinaryOp::Max, a, b) => write!(f, "max({a}, {b})"),
            Expr::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
        }
    }
}
