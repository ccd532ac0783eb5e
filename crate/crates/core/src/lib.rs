//! Discovery of closed-form PDE solutions by reinforcement learning over
//! symbolic expression trees.
//!
//! The crate is organized around the search pipeline:
//!
//! - [`expr`]: tokens, prefix trees, evaluation, exact differentiation,
//!   canonicalization, edit distance.
//! - [`grammar`]: partial-AST reconstruction, grammar/depth action masks,
//!   structural relation matrices.
//! - [`autodiff`]: a small reverse-mode tape over dense `f64` arrays plus
//!   Adam, gradient clipping, and a plateau scheduler.
//! - [`policy`]: the tree-relative-attention decoder that generates
//!   expressions autoregressively under grammar constraints.
//! - [`pde`]: the problem catalog, Monte Carlo residual energies, the
//!   implicit characteristic loss for Hamilton-Jacobi problems, and metrics.
//! - [`constopt`]: gradient refinement of a candidate's constants.
//! - [`trainer`]: rank rewards, entropy/imitation losses, the diversity-
//!   preserving top-k memory, and the staged curriculum loop.

pub mod autodiff;
pub mod constopt;
pub mod expr;
pub mod grammar;
pub mod pde;
pub mod policy;
pub mod trainer;

pub use expr::{ExprTree, PointAssignment, Token, TokenId, TokenKind, Vocabulary};
pub use pde::{EnergyReport, PdeProblem};
pub use policy::{PolicyConfig, SymFormer};
pub use trainer::{run_curriculum, RunResult, TopKMemory, TrainerConfig};
