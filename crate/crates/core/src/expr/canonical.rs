//! Canonical token sequences, degeneracy detection, and edit distance.
//!
//! Canonicalization flattens commutative chains (+, *) and sorts the
//! operands by their rendered canonical strings, with constants rendered as
//! the bare placeholder. Two expressions that differ only by commutative
//! operand order therefore canonicalize identically, which is what both the
//! memory diversity filter and the skeleton check need.

use std::sync::Arc;

use crate::expr::ast::{BinaryOp, Expr};
use crate::expr::tree::ExprTree;
use crate::expr::vocab::{TokenId, Vocabulary};
use crate::expr::ExprError;

/// Canonicalized node: same shape as `Expr` but already ordered.
fn canonical_expr(expr: &Arc<Expr>) -> Arc<Expr> {
    match &**expr {
        Expr::Num(_) | Expr::Slot(_) | Expr::Var(_) => expr.clone(),
        Expr::Unary(op, a) => Arc::new(Expr::Unary(*op, canonical_expr(a))),
        Expr::Binary(op, a, b) => {
            if op.commutative() {
                let mut operands = Vec::new();
                flatten_chain(*op, expr, &mut operands);
                let mut canon: Vec<Arc<Expr>> = operands.iter().map(canonical_expr).collect();
                canon.sort_by(|x, y| canonical_key(x).cmp(&canonical_key(y)));
                rebuild_chain(*op, &canon)
            } else {
                Arc::new(Expr::Binary(*op, canonical_expr(a), canonical_expr(b)))
            }
        }
    }
}

fn flatten_chain(op: BinaryOp, expr: &Arc<Expr>, out: &mut Vec<Arc<Expr>>) {
    match &**expr {
        Expr::Binary(o, a, b) if *o == op => {
            flatten_chain(op, a, out);
            flatten_chain(op, b, out);
        }
        _ => out.push(expr.clone()),
    }
}

fn rebuild_chain(op: BinaryOp, operands: &[Arc<Expr>]) -> Arc<Expr> {
    let mut it = operands.iter().cloned();
    let first = it.next().expect("chain has at least one operand");
    it.fold(first, |acc, x| Arc::new(Expr::Binary(op, acc, x)))
}

/// Key string for ordering: token symbols in prefix order, constants and
/// literals rendered as the placeholder so values do not affect order.
fn canonical_key(expr: &Arc<Expr>) -> String {
    let mut s = String::new();
    write_key(expr, &mut s);
    s
}

fn write_key(expr: &Arc<Expr>, out: &mut String) {
    if !out.is_empty() {
        out.push(' ');
    }
    match &**expr {
        Expr::Num(_) | Expr::Slot(_) => out.push_str("const"),
        Expr::Var(n) => out.push_str(n),
        Expr::Unary(op, a) => {
            out.push_str(op.symbol());
            write_key(a, out);
        }
        Expr::Binary(op, a, b) => {
            out.push_str(op.symbol());
            write_key(a, out);
            write_key(b, out);
        }
    }
}

/// Canonical token sequence of a complete tree. Deterministic and
/// idempotent; commutative operands are sorted consistently.
pub fn canonicalize(vocab: &Vocabulary, tree: &ExprTree) -> Result<Vec<TokenId>, ExprError> {
    let expr = tree.to_expr(vocab)?;
    Ok(canonical_tokens(vocab, &canonical_expr(&expr)))
}

fn canonical_tokens(vocab: &Vocabulary, expr: &Arc<Expr>) -> Vec<TokenId> {
    let mut out = Vec::new();
    fn walk(vocab: &Vocabulary, e: &Arc<Expr>, out: &mut Vec<TokenId>) {
        match &**e {
            Expr::Num(_) | Expr::Slot(_) => out.push(vocab.const_id()),
            Expr::Var(n) => out.push(vocab.lookup(n).expect("variable in vocabulary")),
            Expr::Unary(op, a) => {
                out.push(vocab.lookup(op.symbol()).expect("operator in vocabulary"));
                walk(vocab, a, out);
            }
            Expr::Binary(op, a, b) => {
                out.push(vocab.lookup(op.symbol()).expect("operator in vocabulary"));
                walk(vocab, a, out);
                walk(vocab, b, out);
            }
        }
    }
    walk(vocab, expr, &mut out);
    out
}

/// Canonical form of an already-canonicalized semantic expression; exposed
/// for the skeleton check which canonicalizes after simplification.
pub fn canonical_tokens_of_expr(vocab: &Vocabulary, expr: &Arc<Expr>) -> Vec<TokenId> {
    canonical_tokens(vocab, &canonical_expr(expr))
}

/// True when any subtree is `a - a` or `a / a` with canonically identical
/// operands, or an operator subtree whose leaves are all constants.
pub fn is_degenerate(vocab: &Vocabulary, tree: &ExprTree) -> Result<bool, ExprError> {
    let expr = tree.to_expr(vocab)?;
    Ok(degenerate_walk(&expr).0)
}

/// Returns (found_degenerate, subtree_is_all_constant).
fn degenerate_walk(expr: &Arc<Expr>) -> (bool, bool) {
    match &**expr {
        Expr::Num(_) | Expr::Slot(_) => (false, true),
        Expr::Var(_) => (false, false),
        Expr::Unary(_, a) => {
            let (bad, all_const) = degenerate_walk(a);
            (bad || all_const, all_const)
        }
        Expr::Binary(op, a, b) => {
            let (bad_a, const_a) = degenerate_walk(a);
            let (bad_b, const_b) = degenerate_walk(b);
            let all_const = const_a && const_b;
            let mut bad = bad_a || bad_b || all_const;
            if !bad && matches!(op, BinaryOp::Sub | BinaryOp::Div) {
                let ka = canonical_key(&canonical_expr(a));
                let kb = canonical_key(&canonical_expr(b));
                if ka == kb {
                    bad = true;
                }
            }
            (bad, all_const)
        }
    }
}

/// Standard Levenshtein distance over token ids (unit-cost insert, delete,
/// substitute).
pub fn levenshtein(a: &[TokenId], b: &[TokenId]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ta) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &tb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ta != tb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

// Keep the neg-flattening out of canonicalize: only the skeleton check
// rewrites algebra; the diversity filter sees sampled shapes as-is.

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::tree::parse_prefix_str;
    use proptest::prelude::*;

    fn vocab() -> Vocabulary {
        Vocabulary::standard(&["x", "y", "t"], Some("t"), None)
    }

    #[test]
    fn commutative_operands_sort_identically() {
        let v = vocab();
        let a = parse_prefix_str(&v, "+ x y").unwrap();
        let b = parse_prefix_str(&v, "+ y x").unwrap();
        assert_eq!(canonicalize(&v, &a).unwrap(), canonicalize(&v, &b).unwrap());
    }

    #[test]
    fn subtraction_is_order_sensitive() {
        let v = vocab();
        let a = parse_prefix_str(&v, "- x y").unwrap();
        let b = parse_prefix_str(&v, "- y x").unwrap();
        assert_ne!(canonicalize(&v, &a).unwrap(), canonicalize(&v, &b).unwrap());
    }

    #[test]
    fn idempotent() {
        let v = vocab();
        let t = parse_prefix_str(&v, "* + y x sin + t x").unwrap();
        let once = canonicalize(&v, &t).unwrap();
        let tree2 = ExprTree::new(once.clone(), t.constants.clone());
        let twice = canonicalize(&v, &tree2).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn nested_chains_flatten() {
        let v = vocab();
        // y + (x + t) vs (x + y) + t
        let a = parse_prefix_str(&v, "+ y + x t").unwrap();
        let b = parse_prefix_str(&v, "+ + x y t").unwrap();
        assert_eq!(canonicalize(&v, &a).unwrap(), canonicalize(&v, &b).unwrap());
    }

    #[test]
    fn degenerate_cases() {
        let v = vocab();
        assert!(is_degenerate(&v, &parse_prefix_str(&v, "- x x").unwrap()).unwrap());
        assert!(is_degenerate(&v, &parse_prefix_str(&v, "/ x x").unwrap()).unwrap());
        assert!(is_degenerate(&v, &parse_prefix_str(&v, "+ 1.0 2.0").unwrap()).unwrap());
        assert!(is_degenerate(&v, &parse_prefix_str(&v, "sin 0.5").unwrap()).unwrap());
        assert!(!is_degenerate(&v, &parse_prefix_str(&v, "+ x y").unwrap()).unwrap());
        // A bare constant leaf is a legitimate tree, not a degenerate one.
        assert!(!is_degenerate(&v, &parse_prefix_str(&v, "0.5").unwrap()).unwrap());
        // Identical complex operands under subtraction, up to commutation.
        assert!(is_degenerate(&v, &parse_prefix_str(&v, "- + x y + y x").unwrap()).unwrap());
    }

    #[test]
    fn levenshtein_examples() {
        let v = vocab();
        let a = parse_prefix_str(&v, "+ x y").unwrap();
        let b = parse_prefix_str(&v, "+ x x").unwrap();
        assert_eq!(levenshtein(&a.tokens, &b.tokens), 1);
        assert_eq!(levenshtein(&a.tokens, &a.tokens), 0);
        // "x" vs "+ x y": one insert before, one after.
        let c = parse_prefix_str(&v, "x").unwrap();
        assert_eq!(levenshtein(&c.tokens, &a.tokens), 2);
    }

    /// Textbook DP table as an independent oracle for the distance.
    #[test]
    fn levenshtein_matches_full_table_oracle() {
        fn oracle(a: &[TokenId], b: &[TokenId]) -> usize {
            let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
            for i in 0..=a.len() {
                d[i][0] = i;
            }
            for j in 0..=b.len() {
                d[0][j] = j;
            }
            for i in 1..=a.len() {
                for j in 1..=b.len() {
                    let cost = usize::from(a[i - 1] != b[j - 1]);
                    d[i][j] = (d[i - 1][j] + 1)
                        .min(d[i][j - 1] + 1)
                        .min(d[i - 1][j - 1] + cost);
                }
            }
            d[a.len()][b.len()]
        }
        let seqs: Vec<Vec<TokenId>> = vec![
            vec![TokenId(0), TokenId(1), TokenId(2)],
            vec![TokenId(1)],
            vec![],
            vec![TokenId(2), TokenId(2), TokenId(0), TokenId(1)],
        ];
        for a in &seqs {
            for b in &seqs {
                assert_eq!(levenshtein(a, b), oracle(a, b));
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, .. ProptestConfig::default() })]

        /// Swapping operands of any commutative node leaves the canonical
        /// sequence unchanged.
        #[test]
        fn canonical_invariant_under_commutative_swaps(seed in 0u64..5000) {
            use rand::{Rng, SeedableRng};
            let v = vocab();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            fn gen(rng: &mut rand_chacha::ChaCha8Rng, depth: usize, swap: bool) -> String {
                if depth >= 4 || rng.gen_bool(0.4) {
                    ["x", "y", "t", "0.5"][rng.gen_range(0..4)].to_string()
                } else if rng.gen_bool(0.3) {
                    format!("{} {}", ["sin", "neg", "sqrt"][rng.gen_range(0..3)], gen(rng, depth + 1, swap))
                } else {
                    let op = ["+", "*", "-"][rng.gen_range(0..3)];
                    let a = gen(rng, depth + 1, swap);
                    let b = gen(rng, depth + 1, swap);
                    if swap && (op == "+" || op == "*") {
                        format!("{op} {b} {a}")
                    } else {
                        format!("{op} {a} {b}")
                    }
                }
            }
            let v2 = v.clone();
            let mut rng2 = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let plain = gen(&mut rng, 1, false);
            let swapped = gen(&mut rng2, 1, true);
            let ta = parse_prefix_str(&v, &plain).unwrap();
            let tb = parse_prefix_str(&v2, &swapped).unwrap();
            prop_assert_eq!(canonicalize(&v, &ta).unwrap(), canonicalize(&v2, &tb).unwrap());
        }
    }
}
