//! Structural machinery over partial expressions: partial-AST
//! reconstruction from arity constraints, grammar- and depth-valid action
//! sets, pairwise relation matrices for attention, and ordered-tree
//! isomorphism.

use thiserror::Error;

use crate::expr::{TokenId, TokenKind, Vocabulary};

#[derive(Debug, Clone, Error)]
pub enum GrammarError {
    #[error("token at index {index} arrived with no open slot")]
    NoOpenSlot { index: usize },
}

/// A frontier slot awaiting a token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpenSlot {
    /// Index of the parent node, or `None` for the root slot.
    pub parent: Option<usize>,
    /// Which argument position of the parent this slot fills.
    pub slot: usize,
    /// Depth the token filling this slot will have (root = 1).
    pub depth: usize,
}

/// Partial AST induced by a (possibly incomplete) prefix. Maintained
/// incrementally: each pushed token fills the leftmost open slot and opens
/// its own child slots.
#[derive(Debug, Clone, Default)]
pub struct PartialAst {
    /// Parent index per node; `None` for the root.
    pub parent: Vec<Option<usize>>,
    /// Argument position each node fills in its parent.
    pub child_slot: Vec<usize>,
    /// Depth per node, root = 1.
    pub depth: Vec<usize>,
    /// First (leftmost) child per node, if any so far.
    pub first_child: Vec<Option<usize>>,
    /// Stack of open slots; the top is the slot the next token fills.
    open_slots: Vec<OpenSlot>,
}

impl PartialAst {
    pub fn new() -> Self {
        Self {
            parent: Vec::new(),
            child_slot: Vec::new(),
            depth: Vec::new(),
            first_child: Vec::new(),
            open_slots: vec![OpenSlot { parent: None, slot: 0, depth: 1 }],
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        !self.parent.is_empty() && self.open_slots.is_empty()
    }

    /// The frontier slot the next token will fill.
    pub fn next_slot(&self) -> Option<OpenSlot> {
        self.open_slots.last().copied()
    }

    pub fn open_slots(&self) -> &[OpenSlot] {
        &self.open_slots
    }

    pub fn max_depth(&self) -> usize {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    /// Place a token with the given arity into the frontier.
    pub fn push(&mut self, arity: usize) -> Result<usize, GrammarError> {
        let slot = self
            .open_slots
            .pop()
            .ok_or(GrammarError::NoOpenSlot { index: self.parent.len() })?;
        let idx = self.parent.len();
        self.parent.push(slot.parent);
        self.child_slot.push(slot.slot);
        self.depth.push(slot.depth);
        self.first_child.push(None);
        if let Some(p) = slot.parent {
            if slot.slot == 0 {
                self.first_child[p] = Some(idx);
            }
        }
        // Push child slots rightmost-first so the leftmost is on top.
        for s in (0..arity).rev() {
            self.open_slots.push(OpenSlot { parent: Some(idx), slot: s, depth: slot.depth + 1 });
        }
        Ok(idx)
    }
}

/// Deterministic reconstruction of a partial AST from a prefix.
pub fn build_partial_ast(vocab: &Vocabulary, prefix: &[TokenId]) -> Result<PartialAst, GrammarError> {
    let mut ast = PartialAst::new();
    for (i, &t) in prefix.iter().enumerate() {
        if ast.next_slot().is_none() {
            return Err(GrammarError::NoOpenSlot { index: i });
        }
        ast.push(vocab.arity(t))?;
    }
    Ok(ast)
}

/// Minimal subtree height a token requires: 1 for terminals, 2 for
/// operators (one more level of terminals below).
pub fn min_subtree_height(kind: TokenKind) -> usize {
    match kind {
        TokenKind::Terminal => 1,
        TokenKind::Unary | TokenKind::Binary => 2,
    }
}

/// Grammar- and depth-valid next tokens as a mask over the vocabulary.
///
/// A token fits when `slot_depth + min_subtree_height - 1 <= d_max`. On the
/// second operand of `-` or `/` whose first operand is a terminal, that
/// terminal is additionally excluded (pre-filter for `x - x`, `x / x`),
/// unless the exclusion would empty the valid set — the post-hoc degeneracy
/// resample covers that corner. `allowed` is the stage mask.
pub fn valid_next_tokens(
    ast: &PartialAst,
    prefix: &[TokenId],
    vocab: &Vocabulary,
    allowed: &[bool],
    d_max: usize,
) -> Vec<bool> {
    let slot = ast.next_slot().expect("valid_next_tokens needs an open slot");
    let mut mask: Vec<bool> = (0..vocab.len())
        .map(|i| {
            let tok = vocab.token(TokenId(i));
            allowed[i] && slot.depth + min_subtree_height(tok.kind) - 1 <= d_max
        })
        .collect();

    // Degenerate pre-filter on the sibling terminal.
    if slot.slot == 1 {
        if let Some(p) = slot.parent {
            let parent_sym = vocab.symbol(prefix[p]);
            if parent_sym == "-" || parent_sym == "/" {
                if let Some(fc) = ast.first_child[p] {
                    let sibling = prefix[fc];
                    if vocab.arity(sibling) == 0 && mask[sibling.0] {
                        let others = mask
                            .iter()
                            .enumerate()
                            .filter(|&(i, &m)| m && i != sibling.0)
                            .count();
                        if others > 0 {
                            mask[sibling.0] = false;
                        }
                    }
                }
            }
        }
    }

    debug_assert!(
        mask.iter().any(|&m| m),
        "empty valid set at depth {} with d_max {}",
        slot.depth,
        d_max
    );
    mask
}

/// Pairwise structural relation codes.
pub const REL_SELF: u8 = 0;
pub const REL_PARENT: u8 = 1;
pub const REL_CHILD: u8 = 2;
pub const REL_SIBLING: u8 = 3;
pub const REL_ANCESTOR: u8 = 4;
pub const REL_OTHER: u8 = 5;
pub const NUM_RELATIONS: usize = 6;

/// Square matrix of relation codes, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationMatrix {
    pub dim: usize,
    codes: Vec<u8>,
}

impl RelationMatrix {
    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.codes[i * self.dim + j]
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }
}

/// Relation of node pair (i, j): self, parent (p[j] = i), child (p[i] = j),
/// sibling (shared parent), ancestor (strict, beyond parent), otherwise
/// other. Note the taxonomy is asymmetric: a strict descendant reads as
/// "other".
pub fn relation_matrix(ast: &PartialAst) -> RelationMatrix {
    let n = ast.len();
    let mut codes = vec![REL_OTHER; n * n];
    for i in 0..n {
        for j in 0..n {
            codes[i * n + j] = relation_code(ast, i, j);
        }
    }
    RelationMatrix { dim: n, codes }
}

/// Relation code of one node pair (first match in the case list wins).
pub fn relation_code(ast: &PartialAst, i: usize, j: usize) -> u8 {
    if i == j {
        return REL_SELF;
    }
    if ast.parent[j] == Some(i) {
        return REL_PARENT;
    }
    if ast.parent[i] == Some(j) {
        return REL_CHILD;
    }
    if ast.parent[i].is_some() && ast.parent[i] == ast.parent[j] {
        return REL_SIBLING;
    }
    // Strict ancestor beyond the direct parent.
    let mut cur = ast.parent[j];
    while let Some(p) = cur {
        if p == i {
            return REL_ANCESTOR;
        }
        cur = ast.parent[p];
    }
    REL_OTHER
}

/// Ordered-tree structural isomorphism: internal operator identity and
/// arity, parent-child relations, child order, and frontier configuration
/// must match; terminal identities are ignored. For prefix-induced trees
/// this reduces to a positionwise comparison.
pub fn is_structurally_isomorphic(
    vocab: &Vocabulary,
    a: &[TokenId],
    b: &[TokenId],
) -> bool {
    if a.len() != b.len() {
        return false;
    }
    a.iter().zip(b.iter()).all(|(&ta, &tb)| {
        let (ka, kb) = (vocab.token(ta).kind, vocab.token(tb).kind);
        match (ka, kb) {
            (TokenKind::Terminal, TokenKind::Terminal) => true,
            _ => ta == tb,
        }
    })
}
