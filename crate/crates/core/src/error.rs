use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv parse failure: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("non-binary label `{value}` on data row {row}")]
    NonBinaryLabel { row: usize, value: String },
    #[error("could not parse `{value}` as a number in column `{column}`, data row {row}")]
    BadNumber {
        row: usize,
        column: String,
        value: String,
    },
    #[error("ragged data: row {row} has {got} fields, expected {expected}")]
    Ragged {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("feature index {feature} out of range for {p} features")]
    FeatureOutOfRange { feature: usize, p: usize },
    #[error("Rashomon set exceeded the member cap of {cap}; raise the cap or tighten the threshold")]
    MemberCapExceeded { cap: usize },
    #[error("empty Rashomon set at threshold {threshold}; increase the threshold")]
    EmptyRashomonSet { threshold: f64 },
    #[error("bound undefined: C/delta = {ratio} < 1")]
    BoundUndefined { ratio: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
