//! Packed row sets used by the enumerator.

use crate::dataset::BinarizedDataset;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RowSet {
    words: Vec<u64>,
}

impl RowSet {
    pub fn full(n: usize) -> Self {
        let mut words = vec![u64::MAX; n.div_ceil(64)];
        if !n.is_multiple_of(64) {
            if let Some(last) = words.last_mut() {
                *last = (1u64 << (n % 64)) - 1;
            }
        }
        RowSet { words }
    }

    pub fn empty(n: usize) -> Self {
        RowSet {
            words: vec![0; n.div_ceil(64)],
        }
    }

    pub fn insert(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn contains(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn len(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn intersect(&self, other: &RowSet) -> RowSet {
        RowSet {
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| a & b)
                .collect(),
        }
    }

    pub fn difference(&self, other: &RowSet) -> RowSet {
        RowSet {
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| a & !b)
                .collect(),
        }
    }

    pub fn intersection_len(&self, other: &RowSet) -> u64 {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as u64)
            .sum()
    }
}

/// Column-major bit view of a binarized dataset.
#[derive(Clone, Debug)]
pub struct BitColumns {
    n: usize,
    columns: Vec<RowSet>,
    positives: RowSet,
}

impl BitColumns {
    pub fn new(d: &BinarizedDataset) -> Self {
        let n = d.n();
        let mut columns = vec![RowSet::empty(n); d.p()];
        let mut positives = RowSet::empty(n);
        for i in 0..n {
            for (j, &v) in d.row(i).iter().enumerate() {
                if v == 1 {
                    columns[j].insert(i);
                }
            }
            if d.label(i) == 1 {
                positives.insert(i);
            }
        }
        BitColumns {
            n,
            columns,
            positives,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &RowSet {
        &self.columns[j]
    }

    /// Misclassified rows in `support` when predicting `label` everywhere.
    pub fn leaf_errors(&self, support: &RowSet, label: u8) -> u64 {
        let pos = support.intersection_len(&self.positives);
        if label == 1 {
            support.len() - pos
        } else {
            pos
        }
    }

    /// (rows with x_j = 0, rows with x_j = 1) within `support`.
    pub fn split(&self, support: &RowSet, j: usize) -> (RowSet, RowSet) {
        (
            support.difference(&self.columns[j]),
            support.intersect(&self.columns[j]),
        )
    }
}
