//! Tokens and vocabularies.
//!
//! A vocabulary is the alphabet the policy samples expressions from: binary
//! operators, unary operators, and terminals (variables plus a constant
//! placeholder). Token arity is determined by kind, which is what makes
//! prefix sequences a deterministic grammar.

use std::collections::HashMap;
use std::fmt;

use crate::expr::ExprError;

/// Token category. Arity follows from the kind: binary = 2, unary = 1,
/// terminal = 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Binary,
    Unary,
    Terminal,
}

impl TokenKind {
    pub fn arity(self) -> usize {
        match self {
            TokenKind::Binary => 2,
            TokenKind::Unary => 1,
            TokenKind::Terminal => 0,
        }
    }
}

/// One vocabulary entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub symbol: String,
    pub kind: TokenKind,
    /// Internal tokens (sign, step, max) exist so derivative trees can be
    /// represented and rendered, but are never offered to the sampler.
    pub internal: bool,
}

impl Token {
    pub fn arity(&self) -> usize {
        self.kind.arity()
    }
}

/// Index of a token within its vocabulary. Indices are stable across
/// stage-filtered views: a view is a mask, never a re-numbering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TokenId(pub usize);

/// Symbol of the constant placeholder terminal.
pub const CONST_SYMBOL: &str = "const";

/// Default binary operator set.
pub const DEFAULT_BINARY: [&str; 4] = ["+", "-", "*", "/"];

/// Default unary operator set.
pub const DEFAULT_UNARY: [&str; 8] = ["sin", "cos", "exp", "sqrt", "square", "neg", "abs", "relu"];

/// Operator symbols that only appear inside derivative expressions.
const INTERNAL_UNARY: [&str; 2] = ["sign", "step"];
const INTERNAL_BINARY: [&str; 1] = ["max"];

/// An ordered token set with terminal-role annotations used by the
/// curriculum stages.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<Token>,
    by_symbol: HashMap<String, TokenId>,
    const_id: TokenId,
    time_id: Option<TokenId>,
    param_id: Option<TokenId>,
}

impl Vocabulary {
    /// Build a vocabulary from operator symbol lists and variable names.
    /// `time_var` / `param_var` mark which variable is the time / parameter
    /// terminal so stage views can exclude them. The constant placeholder is
    /// appended automatically, as are the internal calculus-only operators.
    pub fn new(
        binary: &[&str],
        unary: &[&str],
        variables: &[&str],
        time_var: Option<&str>,
        param_var: Option<&str>,
    ) -> Result<Self, ExprError> {
        let mut tokens = Vec::new();
        for &s in binary {
            tokens.push(Token { symbol: s.to_string(), kind: TokenKind::Binary, internal: false });
        }
        for &s in unary {
            tokens.push(Token { symbol: s.to_string(), kind: TokenKind::Unary, internal: false });
        }
        for &s in variables {
            tokens.push(Token { symbol: s.to_string(), kind: TokenKind::Terminal, internal: false });
        }
        tokens.push(Token {
            symbol: CONST_SYMBOL.to_string(),
            kind: TokenKind::Terminal,
            internal: false,
        });
        for &s in &INTERNAL_UNARY {
            tokens.push(Token { symbol: s.to_string(), kind: TokenKind::Unary, internal: true });
        }
        for &s in &INTERNAL_BINARY {
            tokens.push(Token { symbol: s.to_string(), kind: TokenKind::Binary, internal: true });
        }

        let mut by_symbol = HashMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if by_symbol.insert(t.symbol.clone(), TokenId(i)).is_some() {
                return Err(ExprError::DuplicateSymbol(t.symbol.clone()));
            }
        }
        let const_id = by_symbol[CONST_SYMBOL];
        let time_id = match time_var {
            Some(v) => Some(*by_symbol.get(v).ok_or_else(|| ExprError::UnknownToken(v.into()))?),
            None => None,
        };
        let param_id = match param_var {
            Some(v) => Some(*by_symbol.get(v).ok_or_else(|| ExprError::UnknownToken(v.into()))?),
            None => None,
        };
        Ok(Self { tokens, by_symbol, const_id, time_id, param_id })
    }

    /// The standard operator set over the given variables.
    pub fn standard(
        variables: &[&str],
        time_var: Option<&str>,
        param_var: Option<&str>,
    ) -> Self {
        Self::new(&DEFAULT_BINARY, &DEFAULT_UNARY, variables, time_var, param_var)
            .expect("standard vocabulary is well-formed")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, id: TokenId) -> &Token {
        &self.tokens[id.0]
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn lookup(&self, symbol: &str) -> Option<TokenId> {
        self.by_symbol.get(symbol).copied()
    }

    pub fn arity(&self, id: TokenId) -> usize {
        self.tokens[id.0].arity()
    }

    pub fn symbol(&self, id: TokenId) -> &str {
        &self.tokens[id.0].symbol
    }

    pub fn const_id(&self) -> TokenId {
        self.const_id
    }

    pub fn time_id(&self) -> Option<TokenId> {
        self.time_id
    }

    pub fn param_id(&self) -> Option<TokenId> {
        self.param_id
    }

    pub fn is_const(&self, id: TokenId) -> bool {
        id == self.const_id
    }

    /// Sampleable-token mask for a curriculum stage. Stage 1 excludes the
    /// time and parameter terminals, stage 2 excludes the parameter terminal,
    /// stage 3 allows everything. Internal tokens are never sampleable.
    pub fn stage_mask(&self, stage: u8) -> Vec<bool> {
        self.tokens
            .iter()
            .enumerate()
            .map(|(i, t)| {
                if t.internal {
                    return false;
                }
                let id = TokenId(i);
                if stage < 2 && self.time_id == Some(id) {
                    return false;
                }
                if stage < 3 && self.param_id == Some(id) {
                    return false;
                }
                true
            })
            .collect()
    }

    /// Variable names (terminals other than the constant placeholder).
    pub fn variable_names(&self) -> Vec<&str> {
        self.tokens
            .iter()
            .filter(|t| t.kind == TokenKind::Terminal && t.symbol != CONST_SYMBOL)
            .map(|t| t.symbol.as_str())
            .collect()
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}
