//! Semi-synthetic worlds with a hidden partition variable.
//!
//! A base dataset is cut into `K` partitions. A greedy tree is fitted on each
//! partition in turn, with every feature used by an earlier tree zeroed and
//! forbidden, and the partition's labels are replaced by that tree's
//! predictions. The partition index is the unobserved variable `U`, the
//! trees are the sub-models, and the pooled relabeled data is the
//! population, so every ground-truth quantity is a finite sum.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{partition_indices, BinarizedDataset};
use crate::error::{Error, Result};
use crate::importance::{population_counts, population_mr};
use crate::scalar::{ratio, Scalar};
use crate::tree::DecisionTree;

/// Greedy top-down tree: each impure node takes the split with the largest
/// drop in misclassified rows (ties by weighted Gini of the children, then
/// lowest feature index). Zero-gain splits are taken too, so patterns such
/// as XOR are reachable. Leaves predict the majority label, ties to 0.
pub fn fit_greedy_tree(d: &BinarizedDataset, depth: usize, forbidden: &BTreeSet<usize>) -> DecisionTree {
    let rows: Vec<usize> = (0..d.n()).collect();
    grow(d, &rows, depth, &mut Vec::new(), forbidden).canonicalize()
}

fn counts(d: &BinarizedDataset, rows: &[usize]) -> (u64, u64) {
    let pos = rows.iter().filter(|&&i| d.label(i) == 1).count() as u64;
    (rows.len() as u64 - pos, pos)
}

fn grow(
    d: &BinarizedDataset,
    rows: &[usize],
    depth_left: usize,
    path: &mut Vec<usize>,
    forbidden: &BTreeSet<usize>,
) -> DecisionTree {
    let (neg, pos) = counts(d, rows);
    let majority = u8::from(pos > neg);
    if depth_left == 0 || pos == 0 || neg == 0 {
        return DecisionTree::Leaf(majority);
    }
    let node_err = neg.min(pos);
    // (gain, weighted gini, feature)
    let mut best: Option<(u64, f64, usize)> = None;
    for f in 0..d.p() {
        if forbidden.contains(&f) || path.contains(&f) {
            continue;
        }
        let (mut l, mut r) = ((0u64, 0u64), (0u64, 0u64));
        for &i in rows {
            let side = if d.row(i)[f] == 0 { &mut l } else { &mut r };
            if d.label(i) == 1 {
                side.1 += 1;
            } else {
                side.0 += 1;
            }
        }
        if l.0 + l.1 == 0 || r.0 + r.1 == 0 {
            continue;
        }
        let gain = node_err - (l.0.min(l.1) + r.0.min(r.1));
        let gini = |(a, b): (u64, u64)| {
            let t = (a + b) as f64;
            t - (a * a + b * b) as f64 / t
        };
        let impurity = gini(l) + gini(r);
        let better = match best {
            None => true,
            Some((bg, bi, _)) => gain > bg || (gain == bg && impurity < bi),
        };
        if better {
            best = Some((gain, impurity, f));
        }
    }
    let Some((_, _, f)) = best else {
        return DecisionTree::Leaf(majority);
    };
    let (left, right): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| d.row(i)[f] == 0);
    path.push(f);
    let l = grow(d, &left, depth_left - 1, path, forbidden);
    let r = grow(d, &right, depth_left - 1, path, forbidden);
    path.pop();
    DecisionTree::split(f, l, r)
}

/// `n` rows of `p` independent Bernoulli(0.5) features. Labels come from a
/// noisy weighted vote over all features so that every feature carries
/// some signal.
pub fn synthetic_base(n: usize, p: usize, seed: u64) -> Result<BinarizedDataset> {
    if n == 0 || p == 0 {
        return Err(Error::InvalidArgument("synthetic base needs n, p >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = (0..p).map(|j| 1.0 / (1.0 + 0.35 * j as f64)).collect();
    let half: f64 = weights.iter().sum::<f64>() / 2.0;
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<u8> = (0..p).map(|_| u8::from(rng.gen_bool(0.5))).collect();
        let score: f64 = x.iter().zip(&weights).map(|(&v, w)| v as f64 * w).sum();
        let noise: f64 = rng.gen_range(-0.6..0.6);
        y.push(u8::from(score + noise > half));
        rows.push(x);
    }
    BinarizedDataset::with_default_names(rows, y)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldOptions {
    pub k: usize,
    pub depth: usize,
    pub seed: u64,
    /// Relabel with predictions on the zeroed partition copy instead of the
    /// original rows.
    pub relabel_on_zeroed: bool,
}

impl WorldOptions {
    pub fn new(k: usize, depth: usize, seed: u64) -> Self {
        WorldOptions {
            k,
            depth,
            seed,
            relabel_on_zeroed: false,
        }
    }
}

/// Exact ground truth of a world, with the pooled data as the population.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth<T> {
    /// Largest pooled 0-1 loss of any sub-model.
    pub eps_unobs_true: T,
    /// Per feature, the largest shift of a sub-model's MR between its own
    /// group and the rest.
    pub tau_true: Vec<T>,
    /// Per feature, the MR of the conditional mean function over the
    /// pooled data.
    pub phi_gstar_true: Vec<T>,
    /// `[u][j]`: MR of sub-model `u` over the pooled data.
    pub phi_submodels_true: Vec<Vec<T>>,
    /// `[u][j]`: MR of sub-model `u` over its own group.
    pub phi_within: Vec<Vec<T>>,
    /// `[u][j]`: MR of sub-model `u` over the other groups (0 when K = 1).
    pub phi_outside: Vec<Vec<T>>,
}

#[derive(Clone, Debug)]
pub struct SemiSyntheticWorld<T> {
    pub pooled: BinarizedDataset,
    /// Partition of each pooled row, `0..K`.
    pub hidden_u: Vec<usize>,
    pub submodels: Vec<DecisionTree>,
    /// Features zeroed when fitting each sub-model.
    pub zeroed_features: Vec<BTreeSet<usize>>,
    /// Sub-models that came out as a single leaf.
    pub degenerate: Vec<usize>,
    pub options: WorldOptions,
    pub truth: GroundTruth<T>,
}

impl<T: Scalar> SemiSyntheticWorld<T> {
    pub fn k(&self) -> usize {
        self.submodels.len()
    }

    pub fn group_rows(&self, u: usize) -> Vec<usize> {
        (0..self.hidden_u.len()).filter(|&i| self.hidden_u[i] == u).collect()
    }

    /// Binary columns read by at least one sub-model.
    pub fn used_features(&self) -> BTreeSet<usize> {
        self.submodels.iter().flat_map(DecisionTree::features_used).collect()
    }
}

pub fn generate_world<T: Scalar>(base: &BinarizedDataset, opts: WorldOptions) -> Result<SemiSyntheticWorld<T>> {
    let parts = partition_indices(base.n(), opts.k, opts.seed)?;
    let mut used: BTreeSet<usize> = BTreeSet::new();
    let mut labels = vec![0u8; base.n()];
    let mut hidden_u = vec![0usize; base.n()];
    let mut submodels = Vec::with_capacity(opts.k);
    let mut zeroed_features = Vec::with_capacity(opts.k);
    let mut degenerate = Vec::new();
    for (u, rows) in parts.iter().enumerate() {
        let zero: Vec<usize> = used.iter().copied().collect();
        let fit_data = base.select_rows(rows).zero_columns(&zero);
        let f = fit_greedy_tree(&fit_data, opts.depth, &used);
        if matches!(f, DecisionTree::Leaf(_)) {
            degenerate.push(u);
        }
        for (local, &i) in rows.iter().enumerate() {
            let x = if opts.relabel_on_zeroed {
                fit_data.row(local)
            } else {
                base.row(i)
            };
            labels[i] = f.eval(x);
            hidden_u[i] = u;
        }
        zeroed_features.push(used.clone());
        used.extend(f.features_used());
        submodels.push(f);
    }
    if !degenerate.is_empty() {
        log::warn!("sub-models {degenerate:?} degraded to single leaves");
    }
    let pooled = base.with_labels(labels)?;
    let truth = compute_ground_truth::<T>(&pooled, &hidden_u, &submodels)?;
    Ok(SemiSyntheticWorld {
        pooled,
        hidden_u,
        submodels,
        zeroed_features,
        degenerate,
        options: opts,
        truth,
    })
}

/// A world with hand-picked sub-models: row `i` is labeled by
/// `submodels[hidden_u[i]]`.
pub fn world_from_submodels<T: Scalar>(
    base: &BinarizedDataset,
    hidden_u: Vec<usize>,
    submodels: Vec<DecisionTree>,
    opts: WorldOptions,
) -> Result<SemiSyntheticWorld<T>> {
    if hidden_u.len() != base.n() || hidden_u.iter().any(|&u| u >= submodels.len()) {
        return Err(Error::InvalidArgument("hidden_u does not match rows and sub-models".into()));
    }
    for f in &submodels {
        f.validate(base.p(), opts.depth)?;
    }
    let labels = (0..base.n()).map(|i| submodels[hidden_u[i]].eval(base.row(i))).collect();
    let pooled = base.with_labels(labels)?;
    let truth = compute_ground_truth::<T>(&pooled, &hidden_u, &submodels)?;
    let degenerate = (0..submodels.len())
        .filter(|&u| matches!(submodels[u], DecisionTree::Leaf(_)))
        .collect();
    let k = submodels.len();
    Ok(SemiSyntheticWorld {
        pooled,
        hidden_u,
        zeroed_features: vec![BTreeSet::new(); k],
        submodels,
        degenerate,
        options: WorldOptions { k, ..opts },
        truth,
    })
}

/// Two groups of equal size over `p >= 2` Bernoulli(0.5) features: group 0
/// is labeled by `x0`, group 1 by `x0 xor x1`. Every depth-2 tree that is
/// optimal on the pool gives `x0` half the importance that the
/// group-aware function does, so the drift bound carries real weight.
pub fn drift_world<T: Scalar>(n: usize, p: usize, seed: u64) -> Result<SemiSyntheticWorld<T>> {
    if p < 2 {
        return Err(Error::InvalidArgument("drift world needs p >= 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<u8>> = (0..n)
        .map(|_| (0..p).map(|_| u8::from(rng.gen_bool(0.5))).collect())
        .collect();
    let base = BinarizedDataset::with_default_names(rows, vec![0; n])?;
    let mut hidden_u = vec![0; n];
    for (u, block) in partition_indices(n, 2, seed)?.iter().enumerate() {
        for &i in block {
            hidden_u[i] = u;
        }
    }
    let f0 = DecisionTree::split(0, DecisionTree::leaf(0), DecisionTree::leaf(1));
    let f1 = DecisionTree::split(
        0,
        DecisionTree::split(1, DecisionTree::leaf(0), DecisionTree::leaf(1)),
        DecisionTree::split(1, DecisionTree::leaf(1), DecisionTree::leaf(0)),
    );
    world_from_submodels(&base, hidden_u, vec![f0, f1], WorldOptions::new(2, 2, seed))
}

/// Ground truth for sub-models `submodels` over `pooled`, grouped by `hidden_u`.
pub fn compute_ground_truth<T: Scalar>(
    pooled: &BinarizedDataset,
    hidden_u: &[usize],
    submodels: &[DecisionTree],
) -> Result<GroundTruth<T>> {
    let k = submodels.len();
    let n = pooled.n();
    if hidden_u.len() != n {
        return Err(Error::InvalidArgument("hidden_u length differs from pooled rows".into()));
    }
    let groups: Vec<Vec<usize>> = (0..k)
        .map(|u| (0..n).filter(|&i| hidden_u[i] == u).collect())
        .collect();
    if let Some(u) = groups.iter().position(|g| g.len() < 2) {
        return Err(Error::InvalidArgument(format!(
            "partition {u} has fewer than 2 rows"
        )));
    }
    let everyone: Vec<usize> = (0..n).collect();
    let p = pooled.p();

    let eps_unobs_true = submodels
        .iter()
        .map(|f| f.empirical_loss::<T>(pooled))
        .fold(T::zero(), T::max);

    let mut phi_sub = vec![vec![T::zero(); p]; k];
    let mut within = vec![vec![T::zero(); p]; k];
    let mut outside = vec![vec![T::zero(); p]; k];
    let mut tau = vec![T::zero(); p];
    let mut gstar = vec![T::zero(); p];
    for j in 0..p {
        let mut total_switched = 0u64;
        let mut total_errors = 0u64;
        for (u, f) in submodels.iter().enumerate() {
            phi_sub[u][j] = population_mr(f, pooled, &everyone, j)?;
            within[u][j] = population_mr(f, pooled, &groups[u], j)?;
            let rest: Vec<usize> = (0..n).filter(|&i| hidden_u[i] != u).collect();
            outside[u][j] = if rest.is_empty() {
                within[u][j]
            } else {
                population_mr(f, pooled, &rest, j)?
            };
            tau[j] = tau[j].max((within[u][j] - outside[u][j]).abs());
            let c = population_counts(f, pooled, &groups[u], j);
            total_switched += c.switched;
            total_errors += c.errors;
        }
        let n64 = n as u64;
        gstar[j] = ratio::<T>(total_switched, n64 * n64) - ratio::<T>(total_errors, n64);
        if k == 1 {
            outside[0][j] = T::zero();
        }
    }
    Ok(GroundTruth {
        eps_unobs_true,
        tau_true: tau,
        phi_gstar_true: gstar,
        phi_submodels_true: phi_sub,
        phi_within: within,
        phi_outside: outside,
    })
}

impl<T: Scalar + Serialize + for<'de> Deserialize<'de>> SemiSyntheticWorld<T> {
    /// `pooled.csv`, `hidden_u.csv`, `submodel_<u>.json`, `ground_truth.json`
    /// and `world.json` under `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        let io = |source| Error::Io {
            path: dir.to_path_buf(),
            source,
        };
        fs::create_dir_all(dir).map_err(io)?;
        self.pooled
            .write_csv(fs::File::create(dir.join("pooled.csv")).map_err(io)?)?;
        let mut w = csv::Writer::from_path(dir.join("hidden_u.csv"))?;
        w.write_record(["row", "u"])?;
        for (i, u) in self.hidden_u.iter().enumerate() {
            w.write_record([i.to_string(), u.to_string()])?;
        }
        w.flush().map_err(io)?;
        for (u, f) in self.submodels.iter().enumerate() {
            fs::write(dir.join(format!("submodel_{u}.json")), f.to_json()).map_err(io)?;
        }
        fs::write(
            dir.join("ground_truth.json"),
            serde_json::to_string_pretty(&self.truth)?,
        )
        .map_err(io)?;
        let meta = WorldMeta {
            options: self.options,
            zeroed_features: self.zeroed_features.clone(),
            degenerate: self.degenerate.clone(),
        };
        fs::write(dir.join("world.json"), serde_json::to_string_pretty(&meta)?).map_err(io)?;
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let io = |source| Error::Io {
            path: dir.to_path_buf(),
            source,
        };
        let pooled = BinarizedDataset::read_csv(fs::File::open(dir.join("pooled.csv")).map_err(io)?, "y")?;
        let mut hidden_u = Vec::with_capacity(pooled.n());
        for rec in csv::Reader::from_path(dir.join("hidden_u.csv"))?.records() {
            let rec = rec?;
            hidden_u.push(rec[1].parse().map_err(|_| Error::BadNumber {
                row: hidden_u.len(),
                column: "u".into(),
                value: rec[1].to_string(),
            })?);
        }
        let meta: WorldMeta = serde_json::from_str(&fs::read_to_string(dir.join("world.json")).map_err(io)?)?;
        let submodels = (0..meta.options.k)
            .map(|u| {
                let s = fs::read_to_string(dir.join(format!("submodel_{u}.json"))).map_err(io)?;
                DecisionTree::from_json(&s)
            })
            .collect::<Result<Vec<_>>>()?;
        let truth = serde_json::from_str(&fs::read_to_string(dir.join("ground_truth.json")).map_err(io)?)?;
        Ok(SemiSyntheticWorld {
            pooled,
            hidden_u,
            submodels,
            zeroed_features: meta.zeroed_features,
            degenerate: meta.degenerate,
            options: meta.options,
            truth,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct WorldMeta {
    options: WorldOptions,
    zeroed_features: Vec<BTreeSet<usize>>,
    degenerate: Vec<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::DecisionTree as T;

    #[test]
    fn single_feature_labels() {
        let rows: Vec<Vec<u8>> = (0..20).map(|i| vec![(i % 3 == 0) as u8, (i % 2) as u8]).collect();
        let y = rows.iter().map(|r| r[1]).collect();
        let d = BinarizedDataset::with_default_names(rows, y).unwrap();
        assert_eq!(
            fit_greedy_tree(&d, 3, &BTreeSet::new()),
            T::split(1, T::leaf(0), T::leaf(1))
        );
    }

    #[test]
    fn pure_labels_give_a_leaf() {
        let rows: Vec<Vec<u8>> = (0..6).map(|i| vec![(i % 2) as u8]).collect();
        let d = BinarizedDataset::with_default_names(rows, vec![1; 6]).unwrap();
        assert_eq!(fit_greedy_tree(&d, 2, &BTreeSet::new()), T::leaf(1));
    }

    #[test]
    fn forbidden_features_are_skipped() {
        let rows: Vec<Vec<u8>> = (0..16).map(|i| vec![(i % 2) as u8, (i / 2 % 2) as u8]).collect();
        let y = rows.iter().map(|r| r[0]).collect();
        let d = BinarizedDataset::with_default_names(rows, y).unwrap();
        let t = fit_greedy_tree(&d, 2, &BTreeSet::from([0]));
        assert!(!t.uses_feature(0));
    }

    #[test]
    fn synthetic_base_shape() {
        let d = synthetic_base(500, 8, 1).unwrap();
        assert_eq!((d.n(), d.p()), (500, 8));
        let pos = d.labels().iter().filter(|&&v| v == 1).count();
        assert!(pos > 150 && pos < 350, "{pos}");
        assert_eq!(synthetic_base(500, 8, 1).unwrap(), d);
    }

    #[test]
    fn xor_fits_exactly() {
        let rows: Vec<Vec<u8>> = (0..4).map(|i| vec![(i & 1) as u8, (i >> 1) as u8]).collect();
        let y = rows.iter().map(|r| r[0] ^ r[1]).collect();
        let d = BinarizedDataset::with_default_names(rows, y).unwrap();
        let t = fit_greedy_tree(&d, 2, &BTreeSet::new());
        assert_eq!(t.errors(&d), 0);
        assert!(t.depth() <= 2);
    }

    #[test]
    fn xor_world_truth() {
        let x = [[0, 0], [1, 0], [0, 1], [1, 1], [0, 0], [1, 0], [0, 1], [1, 1]];
        let rows: Vec<Vec<u8>> = x.iter().map(|r| r.to_vec()).collect();
        let f0 = T::split(0, T::leaf(0), T::leaf(1));
        let f1 = T::split(0, T::split(1, T::leaf(0), T::leaf(1)), T::split(1, T::leaf(1), T::leaf(0)));
        let u = vec![0, 0, 0, 0, 1, 1, 1, 1];
        let y = rows.iter().zip(&u).map(|(r, &g)| if g == 0 { f0.eval(r) } else { f1.eval(r) }).collect();
        let d = BinarizedDataset::with_default_names(rows, y).unwrap();
        let g: GroundTruth<f64> = compute_ground_truth(&d, &u, &[f0, f1]).unwrap();
        assert_eq!(g.phi_within[0][0], 0.5);
        assert_eq!(g.phi_outside[0][0], 0.0);
        assert_eq!(g.tau_true[0], 0.5);
        assert_eq!(g.phi_gstar_true[0], 0.5 * 0.5 + 0.5 * g.phi_within[1][0]);
        assert_eq!(g.eps_unobs_true, 0.25);
    }

    fn small_world(k: usize, seed: u64) -> SemiSyntheticWorld<f64> {
        let base = synthetic_base(600, 8, seed).unwrap();
        generate_world(&base, WorldOptions::new(k, 2, seed)).unwrap()
    }

    #[test]
    fn world_invariants() {
        let w = small_world(2, 4);
        for i in 0..w.pooled.n() {
            assert_eq!(w.pooled.label(i), w.submodels[w.hidden_u[i]].eval(w.pooled.row(i)));
        }
        let a = w.submodels[0].features_used();
        let b = w.submodels[1].features_used();
        assert!(a.is_disjoint(&b));
        let parts = partition_indices(600, 2, 4).unwrap();
        for (u, rows) in parts.iter().enumerate() {
            assert_eq!(&w.group_rows(u), rows);
        }
        for j in 0..8 {
            let lo = (0..2).map(|u| w.truth.phi_within[u][j]).fold(f64::INFINITY, f64::min);
            let hi = (0..2).map(|u| w.truth.phi_within[u][j]).fold(f64::NEG_INFINITY, f64::max);
            let g = w.truth.phi_gstar_true[j];
            assert!(lo - 1e-12 <= g && g <= hi + 1e-12);
        }
        for (u, f) in w.submodels.iter().enumerate() {
            let own = w.pooled.select_rows(&w.group_rows(u));
            assert!(w.truth.eps_unobs_true >= f.empirical_loss::<f64>(&own) - 1e-12 || u > 0);
            assert!(w.truth.eps_unobs_true >= f.empirical_loss::<f64>(&w.pooled));
        }
        let again = small_world(2, 4);
        assert_eq!(again.pooled, w.pooled);
        assert_eq!(again.submodels, w.submodels);
    }

    #[test]
    fn single_partition_world() {
        let w = small_world(1, 2);
        assert!(w.truth.tau_true.iter().all(|&t| t == 0.0));
        assert_eq!(w.truth.eps_unobs_true, 0.0);
        assert_eq!(w.truth.phi_gstar_true, w.truth.phi_submodels_true[0]);
    }

    #[test]
    fn relabel_flag_gives_same_labels() {
        let base = synthetic_base(400, 8, 9).unwrap();
        let mut opts = WorldOptions::new(3, 2, 9);
        let a: SemiSyntheticWorld<f64> = generate_world(&base, opts).unwrap();
        opts.relabel_on_zeroed = true;
        let b: SemiSyntheticWorld<f64> = generate_world(&base, opts).unwrap();
        assert_eq!(a.pooled, b.pooled);
    }

    #[test]
    fn tiny_partition_is_an_error() {
        let d = BinarizedDataset::with_default_names(vec![vec![0], vec![1], vec![1]], vec![0, 1, 1]).unwrap();
        let f = T::split(0, T::leaf(0), T::leaf(1));
        assert!(compute_ground_truth::<f64>(&d, &[0, 0, 1], &[f.clone(), f]).is_err());
    }

    #[test]
    fn world_dir_round_trip() {
        let w = small_world(2, 5);
        let dir = tempfile::tempdir().unwrap();
        w.write_dir(dir.path()).unwrap();
        let r = SemiSyntheticWorld::<f64>::read_dir(dir.path()).unwrap();
        assert_eq!(r.pooled, w.pooled);
        assert_eq!(r.hidden_u, w.hidden_u);
        assert_eq!(r.submodels, w.submodels);
        assert_eq!(r.truth, w.truth);
    }

    #[test]
    fn drift_world_truth() {
        let w: SemiSyntheticWorld<f64> = drift_world(4000, 4, 1).unwrap();
        assert!(w.truth.tau_true[0] > 0.4);
        assert!(w.truth.phi_gstar_true[0] > 0.45);
        for u in 0..2 {
            assert!(w.truth.phi_submodels_true[u][0] < 0.3);
        }
        assert_eq!(w.truth.phi_gstar_true[3], 0.0);
    }
}
