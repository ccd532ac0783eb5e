//! Symbolic expression core: tokens, prefix trees, evaluation, exact
//! differentiation, canonicalization, and edit distance.

pub mod ast;
pub mod canonical;
pub mod compile;
pub mod diff;
pub mod simplify;
pub mod tree;
pub mod vocab;

pub use ast::{BinaryOp, Expr, PointAssignment, UnaryOp, DIV_GUARD};
pub use canonical::{canonicalize, is_degenerate, levenshtein};
pub use compile::{CompiledExpr, EvalScratch};
pub use diff::{diff, diff_tree, Wrt};
pub use simplify::{inline_constants, skeleton, skeleton_simplify, FOLD_EPS};
pub use tree::{arity_budget, expr_to_tree, parse_prefix, parse_prefix_expr, parse_prefix_str, ExprTree, ParseOutcome};
pub use vocab::{Token, TokenId, TokenKind, Vocabulary, CONST_SYMBOL, DEFAULT_BINARY, DEFAULT_UNARY};

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum ExprError {
    #[error("duplicate symbol in vocabulary: {0}")]
    DuplicateSymbol(String),
    #[error("unknown token: {0}")]
    UnknownToken(String),
    #[error("unknown token `{symbol}` at position {index}")]
    UnknownTokenAt { symbol: String, index: usize },
    #[error("unknown operator: {0}")]
    UnknownOperator(String),
    #[error("empty token sequence")]
    EmptySequence,
    #[error("malformed sequence: token at index {index} arrives after the arity budget closed")]
    MalformedSequence { index: usize },
    #[error("incomplete sequence: {open_slots} open slot(s) remain")]
    IncompleteSequence { open_slots: usize },
    #[error("unbound variable: {0}")]
    UnboundVariable(String),
    #[error("constant slot {slot} out of range (have {have})")]
    MissingConstant { slot: usize, have: usize },
    #[error("constant placeholders ({placeholders}) do not match constants array ({values})")]
    ConstantCountMismatch { placeholders: usize, values: usize },
}
