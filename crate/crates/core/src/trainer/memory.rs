//! Reward-sorted memory of structurally and behaviorally diverse
//! high-reward expressions.

use crate::expr::{canonicalize, levenshtein, CompiledExpr, EvalScratch, ExprTree, TokenId, Vocabulary};
use crate::pde::PdeProblem;

#[derive(Debug, Clone)]
pub struct MemoryEntry {
    pub tree: ExprTree,
    pub reward: f64,
    /// Candidate values at the memory's fixed test points, frozen at
    /// admission (constant refinement updates rewards, not fingerprints, so
    /// the pairwise-diversity invariants survive refinement).
    pub fingerprint: Vec<f64>,
    pub stage: u8,
    /// Cached canonical token sequence for the structural filter.
    pub skeleton: Vec<TokenId>,
}

/// Top-k memory with structural (edit distance of canonical skeletons) and
/// behavioral (mean absolute pointwise difference) diversity filters.
#[derive(Debug, Clone)]
pub struct TopKMemory {
    entries: Vec<MemoryEntry>,
    pub capacity: usize,
    pub delta_structural: usize,
    pub delta_behavioral: f64,
    /// Fixed evaluation points in the problem's point layout, drawn once
    /// per run.
    pub test_points: Vec<Vec<f64>>,
}

impl TopKMemory {
    pub fn new(
        capacity: usize,
        delta_structural: usize,
        delta_behavioral: f64,
        test_points: Vec<Vec<f64>>,
    ) -> Self {
        Self { entries: Vec::new(), capacity, delta_structural, delta_behavioral, test_points }
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut Vec<MemoryEntry> {
        &mut self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn best_reward(&self) -> Option<f64> {
        self.entries.first().map(|e| e.reward)
    }

    pub fn best(&self) -> Option<&MemoryEntry> {
        self.entries.first()
    }

    /// Candidate fingerprint at the fixed test points; `None` when any
    /// value is non-finite (such candidates are not stored).
    pub fn fingerprint(&self, problem: &PdeProblem, tree: &ExprTree) -> Option<Vec<f64>> {
        let u = tree.to_expr(&problem.vocab).ok()?;
        let compiled = CompiledExpr::compile(&u, &problem.point_layout()).ok()?;
        let mut scratch = EvalScratch::default();
        let mut out = Vec::with_capacity(self.test_points.len());
        for p in &self.test_points {
            let v = compiled.eval(p, &tree.constants, &mut scratch);
            if !v.is_finite() {
                return None;
            }
            out.push(v);
        }
        Some(out)
    }

    fn behavioral_distance(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len().min(b.len());
        if n == 0 {
            return f64::INFINITY;
        }
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / n as f64
    }

    fn sort(&mut self) {
        // Stable: ties keep insertion order.
        self.entries
            .sort_by(|a, b| b.reward.partial_cmp(&a.reward).unwrap_or(std::cmp::Ordering::Equal));
    }

    /// Try to admit a candidate. Rejected when a stored entry is too close
    /// structurally (Levenshtein of canonical skeletons < delta_s) or
    /// behaviorally (mean abs difference < delta_b) — unless it duplicates
    /// exactly one entry with strictly higher reward, in which case it
    /// replaces that entry. Over capacity the lowest-reward entry is
    /// evicted. Returns whether the candidate remains stored.
    pub fn insert(
        &mut self,
        problem: &PdeProblem,
        vocab: &Vocabulary,
        tree: ExprTree,
        reward: f64,
        stage: u8,
    ) -> bool {
        if !reward.is_finite() {
            return false;
        }
        let Some(fingerprint) = self.fingerprint(problem, &tree) else {
            return false;
        };
        let Ok(skeleton) = canonicalize(vocab, &tree) else {
            return false;
        };

        let duplicates: Vec<usize> = self
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| {
                levenshtein(&skeleton, &e.skeleton) < self.delta_structural
                    || Self::behavioral_distance(&fingerprint, &e.fingerprint)
                        < self.delta_behavioral
            })
            .map(|(i, _)| i)
            .collect();

        let entry = MemoryEntry { tree, reward, fingerprint, stage, skeleton };
        match duplicates.as_slice() {
            [] => {
                let tokens = entry.tree.tokens.clone();
                self.entries.push(entry);
                self.sort();
                if self.entries.len() > self.capacity {
                    let evicted = self.entries.pop().expect("over capacity");
                    // Admitted iff the eviction hit someone else.
                    return !(evicted.reward == reward && evicted.tree.tokens == tokens);
                }
                true
            }
            [i] if reward > self.entries[*i].reward => {
                self.entries[*i] = entry;
                self.sort();
                true
            }
            _ => false,
        }
    }

    /// Drop entries that no longer parse under the (nested) stage
    /// vocabulary; returns how many were removed. With properly nested
    /// vocabularies this is a no-op.
    pub fn revalidate(&mut self, vocab: &Vocabulary) -> usize {
        let before = self.entries.len();
        self.entries.retain(|e| {
            matches!(
                crate::expr::parse_prefix(vocab, &e.tree.tokens),
                Ok(crate::expr::ParseOutcome::Complete(_))
            )
        });
        before - self.entries.len()
    }

    /// Verify the four memory invariants; used by tests and debug assertions.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.entries.len() > self.capacity {
            return Err(format!("size {} exceeds capacity {}", self.entries.len(), self.capacity));
        }
        for w in self.entries.windows(2) {
            if w[0].reward < w[1].reward {
                return Err("entries not sorted by reward".into());
            }
        }
        for i in 0..self.entries.len() {
            for j in i + 1..self.entries.len() {
                let d = levenshtein(&self.entries[i].skeleton, &self.entries[j].skeleton);
                if d < self.delta_structural {
                    return Err(format!("entries {i},{j} structurally close (lev {d})"));
                }
                let b = Self::behavioral_distance(
                    &self.entries[i].fingerprint,
                    &self.entries[j].fingerprint,
                );
                if b < self.delta_behavioral {
                    return Err(format!("entries {i},{j} behaviorally close ({b})"));
                }
            }
        }
        Ok(())
    }
}
