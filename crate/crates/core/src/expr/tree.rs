//! Prefix-notation expression trees.
//!
//! An `ExprTree` is a complete prefix traversal over vocabulary tokens plus a
//! positional constants array (the i-th `const` occurrence reads
//! `constants[i]`). This is the form the policy emits and the form stored in
//! result files; `Expr` is derived from it for calculus.

use std::sync::Arc;

use crate::expr::ast::{BinaryOp, Expr, PointAssignment, UnaryOp};
use crate::expr::vocab::{TokenId, TokenKind, Vocabulary, CONST_SYMBOL};
use crate::expr::ExprError;

#[derive(Debug, Clone, PartialEq)]
pub struct ExprTree {
    pub tokens: Vec<TokenId>,
    pub constants: Vec<f64>,
}

/// Outcome of reconstructing a tree from a token sequence.
#[derive(Debug, Clone, PartialEq)]
pub enum ParseOutcome {
    Complete(ExprTree),
    /// Arity budget still positive after the last token.
    Incomplete { open_slots: usize },
}

/// Walk a token sequence with the arity budget rule: the budget starts at 1,
/// each token consumes one slot and opens `arity` new ones. Returns the
/// remaining budget, or an error if tokens continue past budget zero.
pub fn arity_budget(vocab: &Vocabulary, tokens: &[TokenId]) -> Result<usize, ExprError> {
    let mut budget = 1usize;
    for (i, &t) in tokens.iter().enumerate() {
        if budget == 0 {
            return Err(ExprError::MalformedSequence { index: i });
        }
        budget = budget - 1 + vocab.arity(t);
    }
    Ok(budget)
}

/// Reconstruct a tree from token ids, checking well-formedness.
pub fn parse_prefix(vocab: &Vocabulary, tokens: &[TokenId]) -> Result<ParseOutcome, ExprError> {
    if tokens.is_empty() {
        return Err(ExprError::EmptySequence);
    }
    let remaining = arity_budget(vocab, tokens)?;
    if remaining > 0 {
        return Ok(ParseOutcome::Incomplete { open_slots: remaining });
    }
    let n_consts = tokens.iter().filter(|&&t| vocab.is_const(t)).count();
    Ok(ParseOutcome::Complete(ExprTree { tokens: tokens.to_vec(), constants: vec![1.0; n_consts] }))
}

/// Parse a whitespace-separated prefix string. Words are vocabulary symbols;
/// anything that parses as a decimal becomes an inlined constant.
pub fn parse_prefix_str(vocab: &Vocabulary, text: &str) -> Result<ExprTree, ExprError> {
    let mut tokens = Vec::new();
    let mut constants = Vec::new();
    for (i, word) in text.split_whitespace().enumerate() {
        if let Some(id) = vocab.lookup(word) {
            tokens.push(id);
            if vocab.is_const(id) {
                constants.push(1.0);
            }
        } else if let Ok(v) = word.parse::<f64>() {
            tokens.push(vocab.const_id());
            constants.push(v);
        } else {
            return Err(ExprError::UnknownTokenAt { symbol: word.to_string(), index: i });
        }
    }
    match parse_prefix(vocab, &tokens)? {
        ParseOutcome::Complete(mut t) => {
            t.constants = constants;
            Ok(t)
        }
        ParseOutcome::Incomplete { open_slots } => Err(ExprError::IncompleteSequence { open_slots }),
    }
}

impl ExprTree {
    pub fn new(tokens: Vec<TokenId>, constants: Vec<f64>) -> Self {
        Self { tokens, constants }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Tree depth with the root at depth 1.
    pub fn depth(&self, vocab: &Vocabulary) -> usize {
        let mut max_depth = 0usize;
        // Stack of remaining child counts; its length is the current depth.
        let mut stack: Vec<usize> = vec![1];
        for &t in &self.tokens {
            max_depth = max_depth.max(stack.len());
            let arity = vocab.arity(t);
            if arity > 0 {
                stack.push(arity);
            } else {
                while let Some(last) = stack.last_mut() {
                    *last -= 1;
                    if *last == 0 {
                        stack.pop();
                    } else {
                        break;
                    }
                }
            }
        }
        max_depth
    }

    /// Convert to the semantic form. Constant occurrences become positional
    /// slots, so `constants` stays authoritative.
    pub fn to_expr(&self, vocab: &Vocabulary) -> Result<Arc<Expr>, ExprError> {
        let mut pos = 0usize;
        let mut const_idx = 0usize;
        let expr = build_expr(vocab, &self.tokens, &mut pos, &mut const_idx)?;
        if pos != self.tokens.len() {
            return Err(ExprError::MalformedSequence { index: pos });
        }
        if const_idx != self.constants.len() {
            return Err(ExprError::ConstantCountMismatch {
                placeholders: const_idx,
                values: self.constants.len(),
            });
        }
        Ok(expr)
    }

    /// Evaluate at a point. Non-finite arithmetic yields the non-finite
    /// marker value, never a panic.
    pub fn eval(&self, vocab: &Vocabulary, point: &PointAssignment) -> Result<f64, ExprError> {
        self.to_expr(vocab)?.eval(point, &self.constants)
    }

    /// Prefix rendering with constants inlined as decimal literals.
    pub fn render_prefix_inline(&self, vocab: &Vocabulary) -> String {
        let mut out = String::new();
        let mut ci = 0usize;
        for (i, &t) in self.tokens.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            if vocab.is_const(t) {
                out.push_str(&format!("{}", self.constants[ci]));
                ci += 1;
            } else {
                out.push_str(vocab.symbol(t));
            }
        }
        out
    }

    /// Prefix rendering with `const` placeholders kept symbolic.
    pub fn render_prefix(&self, vocab: &Vocabulary) -> String {
        self.tokens.iter().map(|&t| vocab.symbol(t)).collect::<Vec<_>>().join(" ")
    }

    /// Infix rendering in the style of the printed benchmark tables.
    pub fn render_infix(&self, vocab: &Vocabulary) -> Result<String, ExprError> {
        let expr = self.to_expr(vocab)?;
        Ok(render_infix_with_consts(&expr, &self.constants))
    }
}

fn render_infix_with_consts(expr: &Expr, constants: &[f64]) -> String {
    match expr {
        Expr::Slot(i) => {
            format!("{}", constants.get(*i).copied().unwrap_or(f64::NAN))
        }
        Expr::Num(v) => format!("{v}"),
        Expr::Var(n) => n.clone(),
        Expr::Unary(UnaryOp::Neg, a) => format!("(-{})", render_infix_with_consts(a, constants)),
        Expr::Unary(UnaryOp::Square, a) => {
            format!("(({})^2)", render_infix_with_consts(a, constants))
        }
        Expr::Unary(op, a) => format!("{}({})", op.symbol(), render_infix_with_consts(a, constants)),
        Expr::Binary(BinaryOp::Max, a, b) => format!(
            "max({}, {})",
            render_infix_with_consts(a, constants),
            render_infix_with_consts(b, constants)
        ),
        Expr::Binary(op, a, b) => format!(
            "({} {} {})",
            render_infix_with_consts(a, constants),
            op.symbol(),
            render_infix_with_consts(b, constants)
        ),
    }
}

fn build_expr(
    vocab: &Vocabulary,
    tokens: &[TokenId],
    pos: &mut usize,
    const_idx: &mut usize,
) -> Result<Arc<Expr>, ExprError> {
    let &t = tokens.get(*pos).ok_or(ExprError::EmptySequence)?;
    *pos += 1;
    let tok = vocab.token(t);
    match tok.kind {
        TokenKind::Terminal => {
            if tok.symbol == CONST_SYMBOL {
                let i = *const_idx;
                *const_idx += 1;
                Ok(Expr::slot(i))
            } else {
                Ok(Expr::var(&tok.symbol))
            }
        }
        TokenKind::Unary => {
            let op = UnaryOp::from_symbol(&tok.symbol)
                .ok_or_else(|| ExprError::UnknownOperator(tok.symbol.clone()))?;
            let a = build_expr(vocab, tokens, pos, const_idx)?;
            // Raw constructor: parsing must preserve shape exactly.
            Ok(Arc::new(Expr::Unary(op, a)))
        }
        TokenKind::Binary => {
            let op = BinaryOp::from_symbol(&tok.symbol)
                .ok_or_else(|| ExprError::UnknownOperator(tok.symbol.clone()))?;
            let a = build_expr(vocab, tokens, pos, const_idx)?;
            let b = build_expr(vocab, tokens, pos, const_idx)?;
            Ok(Arc::new(Expr::Binary(op, a, b)))
        }
    }
}

/// Parse a whitespace-separated prefix string directly into a semantic
/// expression, without a vocabulary: words are operators when they name one,
/// numbers when they parse as decimals, and free variables otherwise.
/// Used for problem-definition templates (residuals, Hamiltonians), whose
/// variables include derivative placeholders like `u_xx`.
pub fn parse_prefix_expr(text: &str) -> Result<Arc<Expr>, ExprError> {
    let words: Vec<&str> = text.split_whitespace().collect();
    if words.is_empty() {
        return Err(ExprError::EmptySequence);
    }
    let mut pos = 0usize;
    let expr = build_template(&words, &mut pos)?;
    if pos != words.len() {
        return Err(ExprError::MalformedSequence { index: pos });
    }
    Ok(expr)
}

fn build_template(words: &[&str], pos: &mut usize) -> Result<Arc<Expr>, ExprError> {
    let word = *words.get(*pos).ok_or(ExprError::EmptySequence)?;
    *pos += 1;
    if let Some(op) = BinaryOp::from_symbol(word) {
        let a = build_template(words, pos)?;
        let b = build_template(words, pos)?;
        return Ok(Arc::new(Expr::Binary(op, a, b)));
    }
    if let Some(op) = UnaryOp::from_symbol(word) {
        let a = build_template(words, pos)?;
        return Ok(Arc::new(Expr::Unary(op, a)));
    }
    if let Ok(v) = word.parse::<f64>() {
        return Ok(Expr::num(v));
    }
    Ok(Expr::var(word))
}

/// Flatten a semantic expression back into prefix tokens + constants.
/// `Num` literals and `Slot`s both become `const` placeholders.
pub fn expr_to_tree(vocab: &Vocabulary, expr: &Expr, constants: &[f64]) -> Result<ExprTree, ExprError> {
    let mut tokens = Vec::new();
    let mut out_consts = Vec::new();
    fn walk(
        vocab: &Vocabulary,
        e: &Expr,
        constants: &[f64],
        tokens: &mut Vec<TokenId>,
        out: &mut Vec<f64>,
    ) -> Result<(), ExprError> {
        match e {
            Expr::Num(v) => {
                tokens.push(vocab.const_id());
                out.push(*v);
            }
            Expr::Slot(i) => {
                tokens.push(vocab.const_id());
                out.push(
                    *constants
                        .get(*i)
                        .ok_or(ExprError::MissingConstant { slot: *i, have: constants.len() })?,
                );
            }
            Expr::Var(n) => {
                tokens.push(vocab.lookup(n).ok_or_else(|| ExprError::UnknownToken(n.clone()))?);
            }
            Expr::Unary(op, a) => {
                tokens.push(
                    vocab
                        .lookup(op.symbol())
                        .ok_or_else(|| ExprError::UnknownToken(op.symbol().into()))?,
                );
                walk(vocab, a, constants, tokens, out)?;
            }
            Expr::Binary(op, a, b) => {
                tokens.push(
                    vocab
                        .lookup(op.symbol())
                        .ok_or_else(|| ExprError::UnknownToken(op.symbol().into()))?,
                );
                walk(vocab, a, constants, tokens, out)?;
                walk(vocab, b, constants, tokens, out)?;
            }
        }
        Ok(())
    }
    walk(vocab, expr, constants, &mut tokens, &mut out_consts)?;
    Ok(ExprTree::new(tokens, out_consts))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocabulary {
        Vocabulary::standard(&["x", "y", "t"], Some("t"), None)
    }

    fn ids(v: &Vocabulary, syms: &[&str]) -> Vec<TokenId> {
        syms.iter().map(|s| v.lookup(s).unwrap()).collect()
    }

    #[test]
    fn smallest_binary_tree_parses() {
        let v = vocab();
        let out = parse_prefix(&v, &ids(&v, &["+", "x", "y"])).unwrap();
        match out {
            ParseOutcome::Complete(t) => assert_eq!(t.len(), 3),
            _ => panic!("expected complete"),
        }
    }

    #[test]
    fn incomplete_sequence_reports_open_slots() {
        let v = vocab();
        let out = parse_prefix(&v, &ids(&v, &["+", "x"])).unwrap();
        assert_eq!(out, ParseOutcome::Incomplete { open_slots: 1 });
    }

    #[test]
    fn overrun_is_malformed() {
        let v = vocab();
        let err = parse_prefix(&v, &ids(&v, &["x", "y"]));
        assert!(matches!(err, Err(ExprError::MalformedSequence { index: 1 })));
    }

    #[test]
    fn hand_traced_depth() {
        // sin(x + t): the slot stack reaches [sin -> + -> leaf] = depth 3.
        let v = vocab();
        let t = parse_prefix_str(&v, "sin + x t").unwrap();
        assert_eq!(t.depth(&v), 3);
        assert_eq!(t.len(), 4);
    }

    #[test]
    fn prefix_string_roundtrip_with_inline_constants() {
        let v = vocab();
        let t = parse_prefix_str(&v, "* -2.5 x").unwrap();
        assert_eq!(t.constants, vec![-2.5]);
        let rendered = t.render_prefix_inline(&v);
        assert_eq!(rendered, "* -2.5 x");
        let back = parse_prefix_str(&v, &rendered).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn infix_rendering_matches_table_style() {
        let v = vocab();
        let t = parse_prefix_str(&v, "* * sin x cos y exp * -2.0 t").unwrap();
        assert_eq!(t.render_infix(&v).unwrap(), "((sin(x) * cos(y)) * exp((-2 * t)))");
    }

    #[test]
    fn expr_tree_roundtrip_through_semantic_form() {
        let v = vocab();
        let t = parse_prefix_str(&v, "+ * 3.5 square x neg y").unwrap();
        let e = t.to_expr(&v).unwrap();
        let back = expr_to_tree(&v, &e, &t.constants).unwrap();
        assert_eq!(back.tokens, t.tokens);
        assert_eq!(back.constants, t.constants);
    }

    #[test]
    fn unknown_word_errors_with_position() {
        let v = vocab();
        let err = parse_prefix_str(&v, "+ x zebra");
        match err {
            Err(ExprError::UnknownTokenAt { symbol, index }) => {
                assert_eq!(symbol, "zebra");
                assert_eq!(index, 2);
            }
            other => panic!("unexpected: {other:?}"),
        }
    }
}
