//! Depth-bounded binary decision trees over binary features.

use std::collections::BTreeSet;

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

use crate::dataset::BinarizedDataset;
use crate::error::{Error, Result};
use crate::scalar::{ratio, Scalar};

/// A leaf predicting 0 or 1, or a split sending `x_feature = 0` left and
/// `x_feature = 1` right.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Deserialize)]
#[serde(try_from = "NodeRepr")]
pub enum DecisionTree {
    Leaf(u8),
    Split {
        feature: usize,
        left: Box<DecisionTree>,
        right: Box<DecisionTree>,
    },
}

#[derive(Deserialize)]
#[serde(untagged, deny_unknown_fields)]
enum NodeRepr {
    Leaf {
        leaf: u8,
    },
    Split {
        feature: usize,
        left: Box<DecisionTree>,
        right: Box<DecisionTree>,
    },
}

impl TryFrom<NodeRepr> for DecisionTree {
    type Error = String;

    fn try_from(node: NodeRepr) -> std::result::Result<Self, String> {
        match node {
            NodeRepr::Leaf { leaf } if leaf <= 1 => Ok(DecisionTree::Leaf(leaf)),
            NodeRepr::Leaf { leaf } => Err(format!("leaf label must be 0 or 1, got {leaf}")),
            NodeRepr::Split {
                feature,
                left,
                right,
            } => Ok(DecisionTree::Split {
                feature,
                left,
                right,
            }),
        }
    }
}

impl Serialize for DecisionTree {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            DecisionTree::Leaf(v) => {
                let mut m = s.serialize_map(Some(1))?;
                m.serialize_entry("leaf", v)?;
                m.end()
            }
            DecisionTree::Split {
                feature,
                left,
                right,
            } => {
                let mut m = s.serialize_map(Some(3))?;
                m.serialize_entry("feature", feature)?;
                m.serialize_entry("left", left)?;
                m.serialize_entry("right", right)?;
                m.end()
            }
        }
    }
}

impl DecisionTree {
    pub fn leaf(label: u8) -> Self {
        debug_assert!(label <= 1);
        DecisionTree::Leaf(label)
    }

    pub fn split(feature: usize, left: DecisionTree, right: DecisionTree) -> Self {
        DecisionTree::Split {
            feature,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("tree serializes")
    }

    pub fn predict(&self, x: &[u8]) -> Result<u8> {
        let mut node = self;
        loop {
            match node {
                DecisionTree::Leaf(v) => return Ok(*v),
                DecisionTree::Split {
                    feature,
                    left,
                    right,
                } => {
                    let v = *x.get(*feature).ok_or(Error::FeatureOutOfRange {
                        feature: *feature,
                        p: x.len(),
                    })?;
                    node = if v == 0 { left } else { right };
                }
            }
        }
    }

    /// Traversal without bounds reporting; callers have checked
    /// `max_feature() < x.len()`.
    #[inline]
    pub fn eval(&self, x: &[u8]) -> u8 {
        let mut node = self;
        loop {
            match node {
                DecisionTree::Leaf(v) => return *v,
                DecisionTree::Split {
                    feature,
                    left,
                    right,
                } => node = if x[*feature] == 0 { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            DecisionTree::Leaf(_) => 0,
            DecisionTree::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            DecisionTree::Leaf(_) => 1,
            DecisionTree::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    pub fn features_used(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.collect_features(&mut out);
        out
    }

    fn collect_features(&self, out: &mut BTreeSet<usize>) {
        if let DecisionTree::Split {
            feature,
            left,
            right,
        } = self
        {
            out.insert(*feature);
            left.collect_features(out);
            right.collect_features(out);
        }
    }

    pub fn uses_feature(&self, j: usize) -> bool {
        match self {
            DecisionTree::Leaf(_) => false,
            DecisionTree::Split {
                feature,
                left,
                right,
            } => *feature == j || left.uses_feature(j) || right.uses_feature(j),
        }
    }

    pub fn max_feature(&self) -> Option<usize> {
        self.features_used().last().copied()
    }

    /// Check membership in the class of depth-`depth_bound` trees over `p`
    /// features with no feature repeated on a root-to-leaf path.
    pub fn validate(&self, p: usize, depth_bound: usize) -> Result<()> {
        if self.depth() > depth_bound {
            return Err(Error::InvalidArgument(format!(
                "tree depth {} exceeds bound {depth_bound}",
                self.depth()
            )));
        }
        fn walk(t: &DecisionTree, p: usize, path: &mut Vec<usize>) -> Result<()> {
            match t {
                DecisionTree::Leaf(v) if *v > 1 => {
                    Err(Error::InvalidArgument(format!("leaf label {v}")))
                }
                DecisionTree::Leaf(_) => Ok(()),
                DecisionTree::Split {
                    feature,
                    left,
                    right,
                } => {
                    if *feature >= p {
                        return Err(Error::FeatureOutOfRange {
                            feature: *feature,
                            p,
                        });
                    }
                    if path.contains(feature) {
                        return Err(Error::InvalidArgument(format!(
                            "feature {feature} repeats on a path"
                        )));
                    }
                    path.push(*feature);
                    walk(left, p, path)?;
                    walk(right, p, path)?;
                    path.pop();
                    Ok(())
                }
            }
        }
        walk(self, p, &mut Vec::new())
    }

    /// Misclassified rows of `d`.
    pub fn errors(&self, d: &BinarizedDataset) -> u64 {
        d.rows().filter(|&(x, y)| self.eval(x) != y).count() as u64
    }

    /// Mean 0-1 loss on `d`.
    pub fn empirical_loss<T: Scalar>(&self, d: &BinarizedDataset) -> T {
        ratio(self.errors(d), d.n() as u64)
    }

    pub fn regularized_objective<T: Scalar>(&self, d: &BinarizedDataset, penalty: RegPenalty<T>) -> T {
        objective_from_counts(self.errors(d), d.n() as u64, self.leaf_count(), penalty)
    }

    /// Collapse every split whose children are identical subtrees, bottom-up,
    /// to a fixed point.
    pub fn canonicalize(&self) -> DecisionTree {
        match self {
            DecisionTree::Leaf(v) => DecisionTree::Leaf(*v),
            DecisionTree::Split {
                feature,
                left,
                right,
            } => {
                let l = left.canonicalize();
                let r = right.canonicalize();
                if l == r {
                    l
                } else {
                    DecisionTree::split(*feature, l, r)
                }
            }
        }
    }

    pub fn is_canonical(&self) -> bool {
        match self {
            DecisionTree::Leaf(_) => true,
            DecisionTree::Split { left, right, .. } => {
                left != right && left.is_canonical() && right.is_canonical()
            }
        }
    }
}

/// The regularized objective from its integer ingredients. Every membership
/// decision goes through this one function so that all code paths agree
/// bit for bit.
#[inline]
pub fn objective_from_counts<T: Scalar>(errors: u64, n: u64, leaves: usize, penalty: RegPenalty<T>) -> T {
    ratio::<T>(errors, n) + penalty.for_leaves(leaves)
}

/// Range of a bounded loss. Only 0-1 loss is implemented.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossSpec<T> {
    pub min: T,
    pub max: T,
}

impl<T: Scalar> LossSpec<T> {
    pub fn zero_one() -> Self {
        LossSpec {
            min: T::zero(),
            max: T::one(),
        }
    }

    pub fn range(&self) -> T {
        self.max - self.min
    }
}

impl<T: Scalar> Default for LossSpec<T> {
    fn default() -> Self {
        Self::zero_one()
    }
}

/// Per-leaf penalty `lambda`; a tree pays `lambda * leaves`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegPenalty<T> {
    pub per_leaf: T,
}

impl<T: Scalar> RegPenalty<T> {
    pub fn new(per_leaf: T) -> Result<Self> {
        if !(per_leaf >= T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "per-leaf penalty must be nonnegative, got {per_leaf}"
            )));
        }
        Ok(RegPenalty { per_leaf })
    }

    pub fn null() -> Self {
        RegPenalty { per_leaf: T::zero() }
    }

    pub fn for_leaves(&self, leaves: usize) -> T {
        self.per_leaf * T::from_count(leaves as u64)
    }

    pub fn of(&self, t: &DecisionTree) -> T {
        self.for_leaves(t.leaf_count())
    }
}

/// Number of structurally distinct trees of depth at most `depth` over `p`
/// features, `T(0) = 2`, `T(d) = 2 + p * T(d-1)^2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelClassCount {
    pub value: u128,
    /// The true count exceeds `u128::MAX`; `value` is saturated.
    pub saturated: bool,
}

pub fn count_model_class(p: usize, depth: usize) -> ModelClassCount {
    let mut t: u128 = 2;
    let mut saturated = false;
    for _ in 0..depth {
        let next = t
            .checked_mul(t)
            .and_then(|sq| sq.checked_mul(p as u128))
            .and_then(|v| v.checked_add(2));
        match next {
            Some(v) => t = v,
            None => {
                saturated = true;
                t = u128::MAX;
                break;
            }
        }
    }
    ModelClassCount { value: t, saturated }
}

#[cfg(test)]
mod tests {
    use super::*;
    use DecisionTree as T;

    fn xor12() -> DecisionTree {
        T::split(0, T::split(1, T::leaf(0), T::leaf(1)), T::split(1, T::leaf(1), T::leaf(0)))
    }

    #[test]
    fn predict_basics() {
        assert_eq!(T::leaf(1).predict(&[0, 1, 0]).unwrap(), 1);
        let t = T::split(0, T::leaf(0), T::leaf(1));
        assert_eq!(t.predict(&[1, 0]).unwrap(), 1);
        assert_eq!(t.predict(&[0, 0]).unwrap(), 0);
        let bad = T::split(5, T::leaf(0), T::leaf(1));
        assert!(matches!(bad.predict(&[0, 1]), Err(Error::FeatureOutOfRange { .. })));
    }

    #[test]
    fn xor_table_columns() {
        // (X1, X2) per row, then the f0 and f1 columns of the 8-row table
        let x = [[0, 0], [1, 0], [0, 1], [1, 1], [0, 0], [1, 0], [0, 1], [1, 1]];
        let f0_col = [0, 1, 0, 1, 0, 1, 0, 1];
        let f1_col = [0, 1, 1, 0, 0, 1, 1, 0];
        let f0 = T::split(0, T::leaf(0), T::leaf(1));
        for i in 0..8 {
            assert_eq!(f0.predict(&x[i]).unwrap(), f0_col[i]);
            assert_eq!(xor12().predict(&x[i]).unwrap(), f1_col[i]);
        }
    }

    #[test]
    fn losses() {
        let rows: Vec<Vec<u8>> = (0..10).map(|i| vec![(i < 6) as u8]).collect();
        let y: Vec<u8> = (0..10).map(|i| (i < 6) as u8).collect();
        let d = BinarizedDataset::with_default_names(rows, y).unwrap();
        let perfect = T::split(0, T::leaf(0), T::leaf(1));
        assert_eq!(perfect.empirical_loss::<f64>(&d), 0.0);
        assert_eq!(T::leaf(1).empirical_loss::<f64>(&d), 0.4);
        let pen = RegPenalty::new(0.01).unwrap();
        assert_eq!(perfect.regularized_objective(&d, pen), 0.02);
        assert_eq!(
            T::leaf(1).regularized_objective(&d, RegPenalty::<f64>::null()),
            T::leaf(1).empirical_loss::<f64>(&d)
        );
    }

    #[test]
    fn objective_arithmetic_depth3() {
        let v: f64 = objective_from_counts(29, 100, 8, RegPenalty::new(0.001).unwrap());
        assert!((v - 0.298).abs() < 1e-15);
    }

    #[test]
    fn canonicalize_collapses() {
        assert_eq!(T::split(0, T::leaf(1), T::leaf(1)).canonicalize(), T::leaf(1));
        let nested = T::split(
            2,
            T::split(0, T::leaf(0), T::leaf(1)),
            T::split(0, T::split(1, T::leaf(0), T::leaf(0)), T::leaf(1)),
        );
        assert_eq!(nested.canonicalize(), T::split(0, T::leaf(0), T::leaf(1)));
        let c = xor12();
        assert!(c.is_canonical());
        assert_eq!(c.canonicalize(), c);
    }

    #[test]
    fn validate_rejects_repeats_and_depth() {
        let rep = T::split(0, T::split(0, T::leaf(0), T::leaf(1)), T::leaf(1));
        assert!(rep.validate(2, 2).is_err());
        assert!(xor12().validate(2, 1).is_err());
        assert!(xor12().validate(1, 2).is_err());
        xor12().validate(2, 2).unwrap();
    }

    #[test]
    fn model_class_counts() {
        assert_eq!(count_model_class(1, 1).value, 6);
        assert_eq!(count_model_class(2, 1).value, 10);
        assert_eq!(count_model_class(7, 0).value, 2);
        assert_eq!(count_model_class(8, 2).value, 9250);
        let big = count_model_class(24, 6);
        assert!(big.saturated);
        assert_eq!(big.value, u128::MAX);
    }

    #[test]
    fn json_shape() {
        let t = T::split(3, T::leaf(0), T::split(1, T::leaf(1), T::leaf(0)));
        let s = t.to_json();
        assert_eq!(
            s,
            r#"{"feature":3,"left":{"leaf":0},"right":{"feature":1,"left":{"leaf":1},"right":{"leaf":0}}}"#
        );
        assert_eq!(T::from_json(&s).unwrap(), t);
        assert!(T::from_json(r#"{"leaf": 2}"#).is_err());
        assert!(T::from_json(r#"{"feature": 0, "left": {"leaf": 0}}"#).is_err());
    }
}
