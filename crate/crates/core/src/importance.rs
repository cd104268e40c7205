//! Subtractive model reliance: how much the loss grows when feature `j` of
//! one row is replaced by feature `j` of another row.
//!
//! Features are binary, so a swap only matters through the donor's bit. For
//! a row `i` the swapped loss is `L_i(0)` or `L_i(1)`, and summing over
//! donors reduces to counting donors with `x_j = 1`. All estimators below
//! accumulate exact integer numerators and divide once.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::BinarizedDataset;
use crate::error::{Error, Result};
use crate::rashomon::RashomonSet;
use crate::scalar::{ratio, Scalar};
use crate::tree::{DecisionTree, LossSpec};

/// Sample size at or below which [`MrMode::default_for`] picks all pairs.
pub const ALL_PAIRS_MAX_N: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MrMode {
    /// Every ordered pair `i != i'` (a U-statistic).
    AllPairs,
    /// A random half paired with the other half, both directions.
    SplitHalf,
}

impl MrMode {
    pub fn default_for(n: usize) -> Self {
        if n <= ALL_PAIRS_MAX_N {
            MrMode::AllPairs
        } else {
            MrMode::SplitHalf
        }
    }
}

impl std::str::FromStr for MrMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all_pairs" => Ok(MrMode::AllPairs),
            "split_half" => Ok(MrMode::SplitHalf),
            other => Err(Error::InvalidArgument(format!("unknown MR mode `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MrResult<T> {
    pub point: T,
    pub alpha: T,
    pub pairing_seed: u64,
}

/// A sample-level importance whose dataset aggregate is the mean of the
/// sample-level values.
pub trait ImportanceMetric<T: Scalar> {
    /// Bounds on any aggregate value under `loss`.
    fn output_range(&self, loss: &LossSpec<T>) -> (T, T);

    fn sample_level(&self, f: &DecisionTree, d: &BinarizedDataset, i: usize, j: usize) -> T;

    fn aggregate(&self, f: &DecisionTree, d: &BinarizedDataset, j: usize) -> T {
        let total = (0..d.n()).fold(T::zero(), |acc, i| acc + self.sample_level(f, d, i, j));
        total / T::from_count(d.n() as u64)
    }
}

/// Subtractive model reliance with every other row as a donor.
#[derive(Clone, Copy, Debug, Default)]
pub struct SubtractiveMr;

impl<T: Scalar> ImportanceMetric<T> for SubtractiveMr {
    fn output_range(&self, loss: &LossSpec<T>) -> (T, T) {
        (-loss.range(), loss.range())
    }

    fn sample_level(&self, f: &DecisionTree, d: &BinarizedDataset, i: usize, j: usize) -> T {
        let n = d.n() as u64;
        let losses = SwapLosses::new(f, d.row(i), d.label(i), j);
        let ones = d.column_ones(j) - d.row(i)[j] as u64;
        let zeros = (n - 1) - ones;
        let switched = ones * losses.with_one + zeros * losses.with_zero;
        ratio::<T>(switched, n - 1) - T::from_count(losses.original)
    }

    fn aggregate(&self, f: &DecisionTree, d: &BinarizedDataset, j: usize) -> T {
        all_pairs(f, d, j)
    }
}

/// 0-1 losses of one row as is, and with feature `j` forced to 0 or 1.
struct SwapLosses {
    original: u64,
    with_zero: u64,
    with_one: u64,
}

impl SwapLosses {
    fn new(f: &DecisionTree, x: &[u8], y: u8, j: usize) -> Self {
        let mut buf = x.to_vec();
        buf[j] = 0;
        let with_zero = u64::from(f.eval(&buf) != y);
        buf[j] = 1;
        let with_one = u64::from(f.eval(&buf) != y);
        let original = if x[j] == 0 { with_zero } else { with_one };
        SwapLosses {
            original,
            with_zero,
            with_one,
        }
    }
}

fn check_feature(f: &DecisionTree, d: &BinarizedDataset, j: usize) -> Result<()> {
    if j >= d.p() {
        return Err(Error::FeatureOutOfRange { feature: j, p: d.p() });
    }
    if let Some(m) = f.max_feature() {
        if m >= d.p() {
            return Err(Error::FeatureOutOfRange { feature: m, p: d.p() });
        }
    }
    Ok(())
}

fn all_pairs<T: Scalar>(f: &DecisionTree, d: &BinarizedDataset, j: usize) -> T {
    if !f.uses_feature(j) {
        return T::zero();
    }
    let n = d.n() as u64;
    let ones_total = d.column_ones(j);
    let (mut switched, mut errors) = (0u64, 0u64);
    for (x, y) in d.rows() {
        let l = SwapLosses::new(f, x, y, j);
        let ones = ones_total - x[j] as u64;
        switched += ones * l.with_one + (n - 1 - ones) * l.with_zero;
        errors += l.original;
    }
    ratio::<T>(switched, n * (n - 1)) - ratio::<T>(errors, n)
}

/// Row pairs for the split-half estimator. Shared across models so that
/// every member of a set is scored on the same swaps.
#[derive(Clone, Debug)]
pub struct Pairing {
    pairs: Vec<(usize, usize)>,
}

impl Pairing {
    pub fn new(n: usize, seed: u64) -> Self {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let m = n / 2;
        Pairing {
            pairs: (0..m).map(|k| (idx[k], idx[m + k])).collect(),
        }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }
}

fn split_half<T: Scalar>(f: &DecisionTree, d: &BinarizedDataset, j: usize, pairing: &Pairing) -> T {
    if !f.uses_feature(j) {
        return T::zero();
    }
    let (mut switched, mut errors) = (0u64, 0u64);
    let mut buf = vec![0u8; d.p()];
    for &(a, b) in pairing.pairs() {
        for (i, donor) in [(a, b), (b, a)] {
            buf.copy_from_slice(d.row(i));
            errors += u64::from(f.eval(&buf) != d.label(i));
            buf[j] = d.row(donor)[j];
            switched += u64::from(f.eval(&buf) != d.label(i));
        }
    }
    let rows = 2 * pairing.pairs().len() as u64;
    ratio::<T>(switched, rows) - ratio::<T>(errors, rows)
}

/// Empirical subtractive MR of feature `j` for `f` on `d`. `seed` only
/// matters for [`MrMode::SplitHalf`].
pub fn mr_point<T: Scalar>(f: &DecisionTree, d: &BinarizedDataset, j: usize, mode: MrMode, seed: u64) -> Result<T> {
    if d.n() < 2 {
        return Err(Error::InvalidArgument(format!(
            "model reliance needs at least 2 rows, got {}",
            d.n()
        )));
    }
    check_feature(f, d, j)?;
    Ok(match mode {
        MrMode::AllPairs => all_pairs(f, d, j),
        MrMode::SplitHalf => split_half(f, d, j, &Pairing::new(d.n(), seed)),
    })
}

/// Half-width that holds simultaneously for `class_size` models with
/// probability `1 - gamma`: Hoeffding on the split-half pairs with a union
/// bound over models and over the two estimator terms,
/// `2 (l_max - l_min) sqrt(ln(4C / gamma) / (2 floor(n/2)))`.
pub fn mr_alpha<T: Scalar>(n: usize, gamma: T, class_size: u128, loss: LossSpec<T>) -> Result<T> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("alpha needs n >= 2, got {n}")));
    }
    if !(gamma > T::zero()) {
        return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    let four = T::from_count(4);
    let c = T::from_f64_lossy(class_size.max(1) as f64);
    let m = (n / 2) as u64;
    let two = T::from_count(2);
    Ok(two * loss.range() * ((four * c / gamma).ln() / T::from_count(2 * m)).sqrt())
}

/// Exact subtractive MR over a finite population: each target row is
/// scored against a donor drawn uniformly from all rows of `d` (the row
/// itself included), minus the targets' own mean loss.
pub fn population_mr<T: Scalar>(f: &DecisionTree, d: &BinarizedDataset, targets: &[usize], j: usize) -> Result<T> {
    if targets.is_empty() {
        return Err(Error::InvalidArgument("population MR over an empty group".into()));
    }
    check_feature(f, d, j)?;
    if !f.uses_feature(j) {
        return Ok(T::zero());
    }
    let c = population_counts(f, d, targets, j);
    let t = targets.len() as u64;
    Ok(ratio::<T>(c.switched, t * d.n() as u64) - ratio::<T>(c.errors, t))
}

/// Integer ingredients of [`population_mr`]: `switched` is summed over
/// target rows and all donors, `errors` over target rows.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PopulationCounts {
    pub switched: u64,
    pub errors: u64,
}

pub fn population_counts(f: &DecisionTree, d: &BinarizedDataset, targets: &[usize], j: usize) -> PopulationCounts {
    let n = d.n() as u64;
    let ones = d.column_ones(j);
    let mut c = PopulationCounts::default();
    for &i in targets {
        let l = SwapLosses::new(f, d.row(i), d.label(i), j);
        c.switched += ones * l.with_one + (n - ones) * l.with_zero;
        c.errors += l.original;
    }
    c
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MrEnvelope<T> {
    pub feature: usize,
    pub min: T,
    pub max: T,
    /// One value per set member, in member order.
    pub per_model: Vec<T>,
}

/// MR of every member of `set` on `d`, all scored on the same pairing.
pub fn mr_over_set<T: Scalar>(
    set: &RashomonSet<T>,
    d: &BinarizedDataset,
    j: usize,
    mode: MrMode,
    seed: u64,
) -> Result<MrEnvelope<T>> {
    if set.is_empty() {
        return Err(Error::EmptyRashomonSet {
            threshold: set.threshold.as_f64(),
        });
    }
    if d.n() < 2 {
        return Err(Error::InvalidArgument("model reliance needs at least 2 rows".into()));
    }
    for t in set.trees() {
        check_feature(t, d, j)?;
    }
    let pairing = match mode {
        MrMode::SplitHalf => Some(Pairing::new(d.n(), seed)),
        MrMode::AllPairs => None,
    };
    let per_model: Vec<T> = set
        .members()
        .par_iter()
        .map(|m| match &pairing {
            Some(p) => split_half(&m.tree, d, j, p),
            None => all_pairs(&m.tree, d, j),
        })
        .collect();
    let min = per_model.iter().copied().fold(T::infinity(), T::min);
    let max = per_model.iter().copied().fold(T::neg_infinity(), T::max);
    Ok(MrEnvelope {
        feature: j,
        min,
        max,
        per_model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::DecisionTree as T;

    /// The 8-row table: (X1, X2) with U = 0 for the first four rows
    /// (Y = X1) and U = 1 for the last four (Y = X1 xor X2).
    fn table() -> BinarizedDataset {
        let x = [[0, 0], [1, 0], [0, 1], [1, 1], [0, 0], [1, 0], [0, 1], [1, 1]];
        let y = vec![0, 1, 0, 1, 0, 1, 1, 0];
        BinarizedDataset::with_default_names(x.iter().map(|r| r.to_vec()).collect(), y).unwrap()
    }

    fn f0() -> DecisionTree {
        T::split(0, T::leaf(0), T::leaf(1))
    }

    #[test]
    fn unused_feature_is_zero() {
        let d = table();
        for mode in [MrMode::AllPairs, MrMode::SplitHalf] {
            assert_eq!(mr_point::<f64>(&f0(), &d, 1, mode, 3).unwrap(), 0.0);
            assert_eq!(mr_point::<f64>(&T::leaf(1), &d, 0, mode, 3).unwrap(), 0.0);
        }
    }

    #[test]
    fn population_values_on_the_table() {
        let d = table();
        let u0 = [0, 1, 2, 3];
        let u1 = [4, 5, 6, 7];
        assert_eq!(population_mr::<f64>(&f0(), &d, &u0, 0).unwrap(), 0.5);
        assert_eq!(population_mr::<f64>(&f0(), &d, &u1, 0).unwrap(), 0.0);
    }

    #[test]
    fn subtable_u_statistic_differs_from_population() {
        // Within the U = 0 rows alone, each row sees three donors, two of
        // which carry the other X1 value.
        let sub = table().select_rows(&[0, 1, 2, 3]);
        let v: f64 = mr_point(&f0(), &sub, 0, MrMode::AllPairs, 0).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn contract_aggregate_is_mean_of_sample_level() {
        let d = table();
        let xor = T::split(0, T::split(1, T::leaf(0), T::leaf(1)), T::split(1, T::leaf(1), T::leaf(0)));
        for j in 0..2 {
            let mean = (0..8).map(|i| ImportanceMetric::<f64>::sample_level(&SubtractiveMr, &xor, &d, i, j)).sum::<f64>() / 8.0;
            let agg: f64 = SubtractiveMr.aggregate(&xor, &d, j);
            assert!((mean - agg).abs() < 1e-12);
        }
        let (lo, hi) = ImportanceMetric::<f64>::output_range(&SubtractiveMr, &LossSpec::zero_one());
        assert_eq!((lo, hi), (-1.0, 1.0));
    }

    #[test]
    fn alpha_values() {
        let a: f64 = mr_alpha(10_000, 0.1, 1000, LossSpec::zero_one()).unwrap();
        // high-precision value 0.065104945228749170...
        assert!((a - 0.065_104_945_228_749_17).abs() < 1e-15);
        for n in [2usize, 10, 1000] {
            let a: f64 = mr_alpha(n, 0.3, 5, LossSpec::zero_one()).unwrap();
            let b: f64 = mr_alpha(4 * n, 0.3, 5, LossSpec::zero_one()).unwrap();
            assert_eq!(b, a / 2.0);
        }
        let min: f64 = mr_alpha(100, 0.999_999_999, 1, LossSpec::zero_one()).unwrap();
        assert!((min - 2.0 * (4f64.ln() / 100.0).sqrt()).abs() < 1e-8);
        assert!(mr_alpha::<f64>(1, 0.1, 1, LossSpec::zero_one()).is_err());
    }

    #[test]
    fn too_few_rows() {
        let d = table().select_rows(&[0]);
        assert!(mr_point::<f64>(&f0(), &d, 0, MrMode::AllPairs, 0).is_err());
    }

    #[test]
    fn split_half_is_seeded() {
        let d = table();
        let a: f64 = mr_point(&f0(), &d, 0, MrMode::SplitHalf, 11).unwrap();
        let b: f64 = mr_point(&f0(), &d, 0, MrMode::SplitHalf, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.abs() <= 1.0);
    }
}
