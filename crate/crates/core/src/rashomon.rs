//! Exact enumeration of empirical Rashomon sets of depth-bounded trees
//! under 0-1 loss plus a per-leaf penalty.
//!
//! The search grows a partial tree depth-first. At each step the most
//! recently opened leaf is either closed with a label or split on a feature
//! not yet used on its path. A partial tree is abandoned once
//! [`branch_bound_lower`] exceeds the threshold. Only canonical trees (no
//! split with identical children) are kept, so each member is produced
//! exactly once. The root decision is fanned out over the rayon pool and the
//! result is sorted, so the member list does not depend on thread count.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::{BitColumns, RowSet};
use crate::dataset::BinarizedDataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tree::{objective_from_counts, DecisionTree, LossSpec, RegPenalty};

pub const DEFAULT_MEMBER_CAP: usize = 10_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RashomonMember<T> {
    pub tree: DecisionTree,
    pub objective: T,
    pub errors: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RashomonSet<T> {
    pub threshold: T,
    pub depth: usize,
    pub penalty: RegPenalty<T>,
    pub loss: LossSpec<T>,
    /// Rows the objectives were computed on.
    pub n: usize,
    members: Vec<RashomonMember<T>>,
}

impl<T: Scalar> RashomonSet<T> {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Members in canonical tree order.
    pub fn members(&self) -> &[RashomonMember<T>] {
        &self.members
    }

    pub fn trees(&self) -> impl Iterator<Item = &DecisionTree> {
        self.members.iter().map(|m| &m.tree)
    }

    pub fn contains(&self, t: &DecisionTree) -> bool {
        self.members.binary_search_by(|m| m.tree.cmp(t)).is_ok()
    }

    pub fn min_objective(&self) -> Option<T> {
        self.members
            .iter()
            .map(|m| m.objective)
            .fold(None, |acc, v| Some(acc.map_or(v, |a: T| a.min(v))))
    }

    /// The subset at a smaller threshold, without re-searching.
    pub fn restrict(&self, threshold: T) -> RashomonSet<T> {
        RashomonSet {
            threshold,
            depth: self.depth,
            penalty: self.penalty,
            loss: self.loss,
            n: self.n,
            members: self
                .members
                .iter()
                .filter(|m| m.objective <= threshold)
                .cloned()
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EnumerationOptions {
    /// Abort once this many members have been found.
    pub max_members: usize,
    /// Disable to check that pruning never changes the result.
    pub pruning: bool,
}

impl Default for EnumerationOptions {
    fn default() -> Self {
        EnumerationOptions {
            max_members: DEFAULT_MEMBER_CAP,
            pruning: true,
        }
    }
}

pub fn enumerate_rashomon<T: Scalar>(
    d: &BinarizedDataset,
    depth: usize,
    penalty: RegPenalty<T>,
    threshold: T,
) -> Result<RashomonSet<T>> {
    enumerate_rashomon_with(d, depth, penalty, threshold, EnumerationOptions::default())
}

pub fn enumerate_rashomon_with<T: Scalar>(
    d: &BinarizedDataset,
    depth: usize,
    penalty: RegPenalty<T>,
    threshold: T,
    opts: EnumerationOptions,
) -> Result<RashomonSet<T>> {
    if !(threshold >= T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "threshold must be nonnegative, got {threshold}"
        )));
    }
    let bits = BitColumns::new(d);
    let found = AtomicUsize::new(0);
    let search = Search {
        bits: &bits,
        n: d.n() as u64,
        penalty,
        threshold,
        pruning: opts.pruning,
        cap: opts.max_members,
        found: &found,
    };
    let root = Slot::Open {
        support: RowSet::full(d.n()),
        depth_left: depth,
        path: Vec::new(),
    };
    let chunks: Vec<Vec<RashomonMember<T>>> = search
        .choices(&root)
        .into_par_iter()
        .map(|choice| {
            let mut nodes = vec![root.clone()];
            let mut open = Vec::new();
            let mut out = Vec::new();
            search.descend(choice, 0, &mut nodes, &mut open, 0, 0, &mut out)?;
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut members: Vec<RashomonMember<T>> = chunks.into_iter().flatten().collect();
    members.sort_by(|a, b| a.tree.cmp(&b.tree));
    debug_assert!(members.windows(2).all(|w| w[0].tree != w[1].tree));
    Ok(RashomonSet {
        threshold,
        depth,
        penalty,
        loss: LossSpec::zero_one(),
        n: d.n(),
        members,
    })
}

/// `|R(eps_prime + lambda_sup)|` on a held-out split, used as the class-size
/// bound `C`. Zero means the threshold admits nothing; callers fall back to
/// the model-class count.
pub fn estimate_set_size<T: Scalar>(
    d_estimation: &BinarizedDataset,
    depth: usize,
    penalty: RegPenalty<T>,
    eps_prime: T,
    lambda_sup: T,
) -> Result<usize> {
    Ok(enumerate_rashomon(d_estimation, depth, penalty, eps_prime + lambda_sup)?.len())
}

/// Smallest regularized objective over the class.
pub fn min_objective<T: Scalar>(d: &BinarizedDataset, depth: usize, penalty: RegPenalty<T>) -> T {
    fn best<T: Scalar>(
        bits: &BitColumns,
        n: u64,
        support: &RowSet,
        depth_left: usize,
        path: &mut Vec<usize>,
        penalty: RegPenalty<T>,
    ) -> (u64, usize, T) {
        let leaf_err = bits.leaf_errors(support, 0).min(bits.leaf_errors(support, 1));
        let mut best_val = (leaf_err, 1, objective_from_counts(leaf_err, n, 1, penalty));
        if depth_left == 0 || leaf_err == 0 {
            return best_val;
        }
        for f in 0..bits.p() {
            if path.contains(&f) {
                continue;
            }
            let (l, r) = bits.split(support, f);
            path.push(f);
            let (le, ll, _) = best(bits, n, &l, depth_left - 1, path, penalty);
            let (re, rl, _) = best(bits, n, &r, depth_left - 1, path, penalty);
            path.pop();
            let v = objective_from_counts(le + re, n, ll + rl, penalty);
            if v < best_val.2 {
                best_val = (le + re, ll + rl, v);
            }
        }
        best_val
    }
    let bits = BitColumns::new(d);
    best(&bits, d.n() as u64, &RowSet::full(d.n()), depth, &mut Vec::new(), penalty).2
}

/// A tree whose leaves may still be open.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PartialTree {
    Open,
    Leaf(u8),
    Split {
        feature: usize,
        left: Box<PartialTree>,
        right: Box<PartialTree>,
    },
}

impl PartialTree {
    pub fn split(feature: usize, left: PartialTree, right: PartialTree) -> Self {
        PartialTree::Split {
            feature,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn open_leaves(&self) -> usize {
        match self {
            PartialTree::Open => 1,
            PartialTree::Leaf(_) => 0,
            PartialTree::Split { left, right, .. } => left.open_leaves() + right.open_leaves(),
        }
    }

    pub fn closed_leaves(&self) -> usize {
        match self {
            PartialTree::Open => 0,
            PartialTree::Leaf(_) => 1,
            PartialTree::Split { left, right, .. } => left.closed_leaves() + right.closed_leaves(),
        }
    }

    /// Rows that reach a closed leaf with the wrong label.
    pub fn committed_errors(&self, d: &BinarizedDataset) -> u64 {
        d.rows()
            .filter(|&(x, y)| {
                let mut node = self;
                loop {
                    match node {
                        PartialTree::Open => return false,
                        PartialTree::Leaf(v) => return *v != y,
                        PartialTree::Split {
                            feature,
                            left,
                            right,
                        } => node = if x[*feature] == 0 { left } else { right },
                    }
                }
            })
            .count() as u64
    }
}

impl From<&DecisionTree> for PartialTree {
    fn from(t: &DecisionTree) -> Self {
        match t {
            DecisionTree::Leaf(v) => PartialTree::Leaf(*v),
            DecisionTree::Split {
                feature,
                left,
                right,
            } => PartialTree::split(*feature, left.as_ref().into(), right.as_ref().into()),
        }
    }
}

/// Lower bound on the regularized objective of every completion of
/// `partial`: errors committed at closed leaves plus one penalty per leaf,
/// open leaves counted as error-free single leaves.
pub fn branch_bound_lower<T: Scalar>(
    partial: &PartialTree,
    d: &BinarizedDataset,
    penalty: RegPenalty<T>,
) -> T {
    objective_from_counts(
        partial.committed_errors(d),
        d.n() as u64,
        partial.closed_leaves() + partial.open_leaves(),
        penalty,
    )
}

#[derive(Clone, Debug)]
enum Slot {
    Open {
        support: RowSet,
        depth_left: usize,
        path: Vec<usize>,
    },
    Leaf(u8),
    Split {
        feature: usize,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Copy, Debug)]
enum Choice {
    Leaf(u8),
    Split(usize),
}

struct Search<'a, T> {
    bits: &'a BitColumns,
    n: u64,
    penalty: RegPenalty<T>,
    threshold: T,
    pruning: bool,
    cap: usize,
    found: &'a AtomicUsize,
}

impl<T: Scalar> Search<'_, T> {
    fn choices(&self, slot: &Slot) -> Vec<Choice> {
        let Slot::Open {
            depth_left, path, ..
        } = slot
        else {
            return Vec::new();
        };
        let mut out = vec![Choice::Leaf(0), Choice::Leaf(1)];
        if *depth_left > 0 {
            out.extend(
                (0..self.bits.p())
                    .filter(|f| !path.contains(f))
                    .map(Choice::Split),
            );
        }
        out
    }

    /// Visit every completion of the partial tree. `nodes` and `open` are
    /// restored before returning.
    fn dfs(
        &self,
        nodes: &mut Vec<Slot>,
        open: &mut Vec<usize>,
        errors: u64,
        leaves: usize,
        out: &mut Vec<RashomonMember<T>>,
    ) -> Result<()> {
        if self.pruning
            && objective_from_counts(errors, self.n, leaves + open.len(), self.penalty) > self.threshold
        {
            return Ok(());
        }
        let Some(id) = open.pop() else {
            return self.emit(nodes, errors, leaves, out);
        };
        for choice in self.choices(&nodes[id]) {
            self.descend(choice, id, nodes, open, errors, leaves, out)?;
        }
        open.push(id);
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn descend(
        &self,
        choice: Choice,
        id: usize,
        nodes: &mut Vec<Slot>,
        open: &mut Vec<usize>,
        errors: u64,
        leaves: usize,
        out: &mut Vec<RashomonMember<T>>,
    ) -> Result<()> {
        let saved = std::mem::replace(&mut nodes[id], Slot::Leaf(0));
        let Slot::Open {
            support,
            depth_left,
            path,
        } = &saved
        else {
            unreachable!("descend on a closed slot");
        };
        match choice {
            Choice::Leaf(label) => {
                nodes[id] = Slot::Leaf(label);
                let e = self.bits.leaf_errors(support, label);
                self.dfs(nodes, open, errors + e, leaves + 1, out)?;
            }
            Choice::Split(f) => {
                let (l, r) = self.bits.split(support, f);
                let mut child_path = path.clone();
                child_path.push(f);
                let li = nodes.len();
                nodes.push(Slot::Open {
                    support: l,
                    depth_left: depth_left - 1,
                    path: child_path.clone(),
                });
                nodes.push(Slot::Open {
                    support: r,
                    depth_left: depth_left - 1,
                    path: child_path,
                });
                nodes[id] = Slot::Split {
                    feature: f,
                    left: li,
                    right: li + 1,
                };
                open.push(li + 1);
                open.push(li);
                // on error the search is abandoned, so state is left as is
                self.dfs(nodes, open, errors, leaves, out)?;
                open.truncate(open.len() - 2);
                nodes.truncate(li);
            }
        }
        nodes[id] = saved;
        Ok(())
    }

    fn emit(
        &self,
        nodes: &[Slot],
        errors: u64,
        leaves: usize,
        out: &mut Vec<RashomonMember<T>>,
    ) -> Result<()> {
        let objective = objective_from_counts(errors, self.n, leaves, self.penalty);
        if objective > self.threshold {
            return Ok(());
        }
        let tree = build(nodes, 0);
        if !tree.is_canonical() {
            return Ok(());
        }
        if self.found.fetch_add(1, Ordering::Relaxed) >= self.cap {
            return Err(Error::MemberCapExceeded { cap: self.cap });
        }
        out.push(RashomonMember {
            tree,
            objective,
            errors,
        });
        Ok(())
    }
}

fn build(nodes: &[Slot], id: usize) -> DecisionTree {
    match &nodes[id] {
        Slot::Leaf(v) => DecisionTree::Leaf(*v),
        Slot::Split {
            feature,
            left,
            right,
        } => DecisionTree::split(*feature, build(nodes, *left), build(nodes, *right)),
        Slot::Open { .. } => unreachable!("complete tree has no open slots"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::DecisionTree as T;

    fn xor_world() -> BinarizedDataset {
        // Two copies of the 8 (X1, X2, X3) patterns; the first copy labeled
        // X1 xor X2, the second X1 xor X3.
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for u in 0..2 {
            for code in 0..8u8 {
                let x = vec![code & 1, code >> 1 & 1, code >> 2 & 1];
                y.push(if u == 0 { x[0] ^ x[1] } else { x[0] ^ x[2] });
                rows.push(x);
            }
        }
        BinarizedDataset::with_default_names(rows, y).unwrap()
    }

    fn xor_tree(a: usize, b: usize) -> DecisionTree {
        T::split(a, T::split(b, T::leaf(0), T::leaf(1)), T::split(b, T::leaf(1), T::leaf(0)))
    }

    #[test]
    fn below_penalty_is_empty() {
        let d = xor_world();
        let pen = RegPenalty::new(0.1).unwrap();
        assert!(enumerate_rashomon(&d, 2, pen, 0.05f64).unwrap().is_empty());
    }

    #[test]
    fn both_xor_models_at_bayes_rate() {
        let d = xor_world();
        let set = enumerate_rashomon(&d, 2, RegPenalty::<f64>::null(), 0.25).unwrap();
        let f1 = xor_tree(0, 1);
        let f2 = xor_tree(0, 2);
        assert_eq!(f1.empirical_loss::<f64>(&d), 0.25);
        assert!(set.contains(&f1));
        assert!(set.contains(&f2));
        assert!(set.trees().all(|t| t.is_canonical() && t.depth() <= 2));
    }

    #[test]
    fn member_cap_aborts() {
        let d = xor_world();
        let opts = EnumerationOptions {
            max_members: 3,
            pruning: true,
        };
        let res = enumerate_rashomon_with(&d, 2, RegPenalty::<f64>::null(), 1.0, opts);
        assert!(matches!(res, Err(Error::MemberCapExceeded { cap: 3 })));
    }

    #[test]
    fn bound_cases() {
        let d = xor_world();
        let pen = RegPenalty::new(0.1).unwrap();
        let t = xor_tree(0, 1);
        let full: f64 = branch_bound_lower(&PartialTree::from(&t), &d, pen);
        assert_eq!(full, t.regularized_objective(&d, pen));
        let root: f64 = branch_bound_lower(&PartialTree::Open, &d, pen);
        assert!(root >= 0.1);
    }

    #[test]
    fn restrict_matches_fresh_enumeration() {
        let d = xor_world();
        let pen = RegPenalty::new(0.01).unwrap();
        let wide = enumerate_rashomon(&d, 2, pen, 0.5f64).unwrap();
        let narrow = enumerate_rashomon(&d, 2, pen, 0.3f64).unwrap();
        assert_eq!(wide.restrict(0.3).members(), narrow.members());
    }

    #[test]
    fn min_objective_matches_set() {
        let d = xor_world();
        let pen = RegPenalty::new(0.01).unwrap();
        let m = min_objective(&d, 2, pen);
        let set = enumerate_rashomon(&d, 2, pen, 1.0f64).unwrap();
        assert_eq!(Some(m), set.min_objective());
    }
}
