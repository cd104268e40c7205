//! Independent reference implementations used as test oracles.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rashomon_vi::{BinarizedDataset, DecisionTree};

/// Every tree of depth at most `depth` over `p` features, including
/// non-canonical ones; `no_repeat` forbids a feature twice on a path.
pub fn all_trees(p: usize, depth: usize, no_repeat: bool) -> Vec<DecisionTree> {
    fn go(p: usize, depth: usize, path: &mut Vec<usize>, no_repeat: bool) -> Vec<DecisionTree> {
        let mut out = vec![DecisionTree::Leaf(0), DecisionTree::Leaf(1)];
        if depth == 0 {
            return out;
        }
        for f in 0..p {
            if no_repeat && path.contains(&f) {
                continue;
            }
            path.push(f);
            let subs = go(p, depth - 1, path, no_repeat);
            path.pop();
            for l in &subs {
                for r in &subs {
                    out.push(DecisionTree::split(f, l.clone(), r.clone()));
                }
            }
        }
        out
    }
    go(p, depth, &mut Vec::new(), no_repeat)
}

/// No split has two structurally equal children.
pub fn canonical(t: &DecisionTree) -> bool {
    match t {
        DecisionTree::Leaf(_) => true,
        DecisionTree::Split { left, right, .. } => left != right && canonical(left) && canonical(right),
    }
}

pub fn predict(t: &DecisionTree, x: &[u8]) -> u8 {
    match t {
        DecisionTree::Leaf(v) => *v,
        DecisionTree::Split { feature, left, right } => {
            if x[*feature] == 0 {
                predict(left, x)
            } else {
                predict(right, x)
            }
        }
    }
}

pub fn leaves(t: &DecisionTree) -> usize {
    match t {
        DecisionTree::Leaf(_) => 1,
        DecisionTree::Split { left, right, .. } => leaves(left) + leaves(right),
    }
}

pub fn objective(t: &DecisionTree, d: &BinarizedDataset, lambda: f64) -> f64 {
    let errors = (0..d.n()).filter(|&i| predict(t, d.row(i)) != d.label(i)).count();
    errors as f64 / d.n() as f64 + lambda * leaves(t) as f64
}

/// Brute-force Rashomon set: filter every canonical tree by its objective.
pub fn brute_force_set(d: &BinarizedDataset, depth: usize, lambda: f64, threshold: f64) -> Vec<DecisionTree> {
    let mut out: Vec<DecisionTree> = all_trees(d.p(), depth, true)
        .into_iter()
        .filter(|t| canonical(t) && objective(t, d, lambda) <= threshold)
        .collect();
    out.sort();
    out
}

/// Subtractive MR by the direct double loop over ordered pairs `i != k`.
pub fn mr_double_loop(t: &DecisionTree, d: &BinarizedDataset, j: usize) -> f64 {
    let n = d.n();
    let mut switched = 0usize;
    let mut errors = 0usize;
    for i in 0..n {
        errors += usize::from(predict(t, d.row(i)) != d.label(i));
        for k in 0..n {
            if k == i {
                continue;
            }
            let mut x = d.row(i).to_vec();
            x[j] = d.row(k)[j];
            switched += usize::from(predict(t, &x) != d.label(i));
        }
    }
    switched as f64 / (n * (n - 1)) as f64 - errors as f64 / n as f64
}

/// Population MR: donors drawn from all rows of `d` (self included), targets `rows`.
pub fn mr_population_loop(t: &DecisionTree, d: &BinarizedDataset, rows: &[usize], j: usize) -> f64 {
    let mut switched = 0usize;
    let mut errors = 0usize;
    for &i in rows {
        errors += usize::from(predict(t, d.row(i)) != d.label(i));
        for k in 0..d.n() {
            let mut x = d.row(i).to_vec();
            x[j] = d.row(k)[j];
            switched += usize::from(predict(t, &x) != d.label(i));
        }
    }
    switched as f64 / (rows.len() * d.n()) as f64 - errors as f64 / rows.len() as f64
}

/// Random binary data; labels follow a random small tree with flip noise
/// half of the time, and are pure noise otherwise.
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, p: usize) -> BinarizedDataset {
    let rows: Vec<Vec<u8>> = (0..n).map(|_| (0..p).map(|_| rng.gen_range(0..2)).collect()).collect();
    let structured = rng.gen_bool(0.5);
    let a = rng.gen_range(0..p);
    let b = rng.gen_range(0..p);
    let y = rows
        .iter()
        .map(|x| {
            if structured {
                let clean = if x[a] == 1 { x[b] } else { 1 - x[b] };
                if rng.gen_bool(0.15) {
                    1 - clean
                } else {
                    clean
                }
            } else {
                rng.gen_range(0..2)
            }
        })
        .collect();
    BinarizedDataset::with_default_names(rows, y).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
