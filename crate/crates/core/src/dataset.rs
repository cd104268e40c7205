//! Tabular ingestion, quantile binarization, and the splits and resamples
//! every experiment is built from.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Real-valued features with binary labels, straight from a CSV file.
#[derive(Clone, Debug, PartialEq)]
pub struct RawDataset {
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl RawDataset {
    pub fn new(feature_names: Vec<String>, rows: Vec<Vec<f64>>, labels: Vec<u8>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != feature_names.len() {
                return Err(Error::Ragged {
                    row: i,
                    got: r.len(),
                    expected: feature_names.len(),
                });
            }
        }
        if let Some(i) = labels.iter().position(|&l| l > 1) {
            return Err(Error::NonBinaryLabel {
                row: i,
                value: labels[i].to_string(),
            });
        }
        Ok(RawDataset {
            feature_names,
            rows,
            labels,
        })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn p_raw(&self) -> usize {
        self.feature_names.len()
    }

    /// Keep only the first `max` raw features.
    pub fn truncate_features(&mut self, max: usize) {
        if max >= self.p_raw() {
            return;
        }
        self.feature_names.truncate(max);
        for r in &mut self.rows {
            r.truncate(max);
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<RawDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, label_column)
}

/// Parse an RFC-4180 CSV with a header row.
pub fn read_csv(reader: impl Read, label_column: &str) -> Result<RawDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::MissingColumn(label_column.to_string()))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != label_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != headers.len() {
            return Err(Error::Ragged {
                row,
                got: rec.len(),
                expected: headers.len(),
            });
        }
        let raw_label = rec[label_idx].trim();
        let label = match raw_label.parse::<f64>() {
            Ok(0.0) => 0,
            Ok(1.0) => 1,
            _ => {
                return Err(Error::NonBinaryLabel {
                    row,
                    value: raw_label.to_string(),
                })
            }
        };
        let mut values = Vec::with_capacity(feature_names.len());
        for (i, field) in rec.iter().enumerate() {
            if i == label_idx {
                continue;
            }
            let v = field.trim().parse::<f64>().map_err(|_| Error::BadNumber {
                row,
                column: headers[i].clone(),
                value: field.to_string(),
            })?;
            values.push(v);
        }
        rows.push(values);
        labels.push(label);
    }
    RawDataset::new(feature_names, rows, labels)
}

/// Thresholds for one raw feature; column `i` of its block is `x <= thresholds[i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureThresholds {
    pub raw_name: String,
    pub thresholds: Vec<f64>,
    /// First binary column of this feature's block.
    pub first_column: usize,
    /// The raw feature took a single value.
    pub constant: bool,
    /// Two quantiles landed on the same data value, so the block holds
    /// identical columns.
    pub repeated_thresholds: bool,
}

impl FeatureThresholds {
    pub fn columns(&self) -> std::ops::Range<usize> {
        self.first_column..self.first_column + self.thresholds.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinarizationSpec {
    pub features: Vec<FeatureThresholds>,
}

impl BinarizationSpec {
    /// Raw feature owning binary column `col`.
    pub fn raw_feature_of(&self, col: usize) -> Option<usize> {
        self.features.iter().position(|f| f.columns().contains(&col))
    }
}

pub fn column_name(raw: &str, threshold: f64) -> String {
    format!("{raw}__le__{threshold}")
}

/// Binarize every raw feature into `k` columns `x <= q_i` at the quantiles
/// `i / (k + 1)`, using the lower-interpolation rule.
pub fn binarize_quantiles(d: &RawDataset, k: usize) -> Result<(BinarizedDataset, BinarizationSpec)> {
    if d.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let n = d.n();
    let mut features = Vec::with_capacity(d.p_raw());
    for (f, name) in d.feature_names.iter().enumerate() {
        let mut values: Vec<f64> = d.rows.iter().map(|r| r[f]).collect();
        values.sort_by(f64::total_cmp);
        let thresholds: Vec<f64> = (1..=k).map(|i| values[i * (n - 1) / (k + 1)]).collect();
        features.push(FeatureThresholds {
            raw_name: name.clone(),
            repeated_thresholds: thresholds.windows(2).any(|w| w[0] == w[1]),
            constant: values[0] == values[n - 1],
            thresholds,
            first_column: f * k,
        });
    }
    let spec = BinarizationSpec { features };
    let data = apply_binarization(d, &spec)?;
    Ok((data, spec))
}

/// Apply previously fitted thresholds to new raw rows.
pub fn apply_binarization(d: &RawDataset, spec: &BinarizationSpec) -> Result<BinarizedDataset> {
    if spec.features.len() != d.p_raw() {
        return Err(Error::InvalidArgument(format!(
            "binarization covers {} raw features, dataset has {}",
            spec.features.len(),
            d.p_raw()
        )));
    }
    let names: Vec<String> = spec
        .features
        .iter()
        .flat_map(|f| f.thresholds.iter().map(|&t| column_name(&f.raw_name, t)))
        .collect();
    let p = names.len();
    let mut x = Vec::with_capacity(d.n() * p);
    for r in &d.rows {
        for (f, ft) in spec.features.iter().enumerate() {
            x.extend(ft.thresholds.iter().map(|&t| u8::from(r[f] <= t)));
        }
    }
    let mut out = BinarizedDataset::from_flat(x, d.labels.clone(), names)?;
    out.provenance = Some(Arc::new(spec.clone()));
    Ok(out)
}

/// Binary design matrix with binary labels: the empirical distribution.
#[derive(Clone, Debug)]
pub struct BinarizedDataset {
    x: Vec<u8>,
    y: Vec<u8>,
    p: usize,
    column_names: Vec<String>,
    pub provenance: Option<Arc<BinarizationSpec>>,
}

impl PartialEq for BinarizedDataset {
    fn eq(&self, other: &Self) -> bool {
        self.x == other.x
            && self.y == other.y
            && self.p == other.p
            && self.column_names == other.column_names
    }
}

impl BinarizedDataset {
    pub fn new(rows: Vec<Vec<u8>>, labels: Vec<u8>, column_names: Vec<String>) -> Result<Self> {
        let p = column_names.len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != p {
                return Err(Error::Ragged {
                    row: i,
                    got: r.len(),
                    expected: p,
                });
            }
        }
        Self::from_flat(rows.concat(), labels, column_names)
    }

    /// Columns named `x0, x1, ...`.
    pub fn with_default_names(rows: Vec<Vec<u8>>, labels: Vec<u8>) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        Self::new(rows, labels, (0..p).map(|j| format!("x{j}")).collect())
    }

    pub fn from_flat(x: Vec<u8>, y: Vec<u8>, column_names: Vec<String>) -> Result<Self> {
        let p = column_names.len();
        if y.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if p == 0 {
            return Err(Error::InvalidArgument("dataset needs at least one column".into()));
        }
        if x.len() != y.len() * p {
            return Err(Error::InvalidArgument(format!(
                "matrix has {} entries, expected {}x{}",
                x.len(),
                y.len(),
                p
            )));
        }
        if x.iter().any(|&v| v > 1) {
            return Err(Error::InvalidArgument("feature entries must be 0 or 1".into()));
        }
        if let Some(i) = y.iter().position(|&v| v > 1) {
            return Err(Error::NonBinaryLabel {
                row: i,
                value: y[i].to_string(),
            });
        }
        Ok(BinarizedDataset {
            x,
            y,
            p,
            column_names,
            provenance: None,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.y[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.y
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[u8], u8)> + '_ {
        self.x.chunks_exact(self.p).zip(self.y.iter().copied())
    }

    /// New dataset made of the given rows, in the given order (repeats allowed).
    pub fn select_rows(&self, idx: &[usize]) -> BinarizedDataset {
        let mut x = Vec::with_capacity(idx.len() * self.p);
        let mut y = Vec::with_capacity(idx.len());
        for &i in idx {
            x.extend_from_slice(self.row(i));
            y.push(self.y[i]);
        }
        BinarizedDataset {
            x,
            y,
            p: self.p,
            column_names: self.column_names.clone(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn with_labels(&self, y: Vec<u8>) -> Result<BinarizedDataset> {
        let mut out = Self::from_flat(self.x.clone(), y, self.column_names.clone())?;
        out.provenance = self.provenance.clone();
        Ok(out)
    }

    /// Copy with every entry of the given columns set to 0.
    pub fn zero_columns(&self, cols: &[usize]) -> BinarizedDataset {
        let mut out = self.clone();
        for row in out.x.chunks_exact_mut(self.p) {
            for &j in cols {
                row[j] = 0;
            }
        }
        out
    }

    /// Positive count in column `j`.
    pub fn column_ones(&self, j: usize) -> u64 {
        self.x.iter().skip(j).step_by(self.p).map(|&v| v as u64).sum()
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header: Vec<&str> = self.column_names.iter().map(String::as_str).collect();
        header.push("y");
        wtr.write_record(&header)?;
        for (row, y) in self.rows() {
            let mut rec: Vec<String> = row.iter().map(u8::to_string).collect();
            rec.push(y.to_string());
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|source| Error::Io {
            path: "<csv writer>".into(),
            source,
        })?;
        Ok(())
    }

    /// Read a binary CSV written by [`BinarizedDataset::write_csv`].
    pub fn read_csv(r: impl Read, label_column: &str) -> Result<BinarizedDataset> {
        let raw = read_csv(r, label_column)?;
        let mut x = Vec::with_capacity(raw.n() * raw.p_raw());
        for (i, row) in raw.rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 && v != 1.0 {
                    return Err(Error::BadNumber {
                        row: i,
                        column: raw.feature_names[j].clone(),
                        value: v.to_string(),
                    });
                }
                x.push(v as u8);
            }
        }
        Self::from_flat(x, raw.labels, raw.feature_names)
    }
}

/// Train/eval partition of one dataset.
#[derive(Clone, Debug)]
pub struct SplitPair {
    pub train: BinarizedDataset,
    pub eval: BinarizedDataset,
    pub train_rows: Vec<usize>,
    pub eval_rows: Vec<usize>,
    pub seed: u64,
}

/// `round(0.8 * n)`, clamped so both sides are nonempty.
pub fn train_size(n: usize) -> usize {
    ((8 * n + 5) / 10).clamp(1, n.saturating_sub(1).max(1))
}

pub fn split_80_20(d: &BinarizedDataset, seed: u64) -> Result<SplitPair> {
    let n = d.n();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 rows to split, got {n}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let eval_rows = idx.split_off(train_size(n));
    Ok(SplitPair {
        train: d.select_rows(&idx),
        eval: d.select_rows(&eval_rows),
        train_rows: idx,
        eval_rows,
        seed,
    })
}

pub fn resample_with_replacement(d: &BinarizedDataset, m: usize, seed: u64) -> Result<BinarizedDataset> {
    if m == 0 {
        return Err(Error::InvalidArgument("resample size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx: Vec<usize> = (0..m).map(|_| rng.gen_range(0..d.n())).collect();
    Ok(d.select_rows(&idx))
}

/// Shuffled row indices cut into `k` blocks whose sizes differ by at most one.
pub fn partition_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "cannot cut {n} rows into {k} partitions"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for part in 0..k {
        let len = base + usize::from(part < extra);
        let mut block = idx[start..start + len].to_vec();
        block.sort_unstable();
        out.push(block);
        start += len;
    }
    Ok(out)
}

pub fn partition_k(d: &BinarizedDataset, k: usize, seed: u64) -> Result<Vec<BinarizedDataset>> {
    Ok(partition_indices(d.n(), k, seed)?
        .iter()
        .map(|rows| d.select_rows(rows))
        .collect())
}
