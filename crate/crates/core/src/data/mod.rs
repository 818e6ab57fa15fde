//! Dataset loading, preprocessing, augmentation and epoch batching.
//!
//! Every dataset stores samples as columns of a `d × N` matrix. Sources with
//! an odd feature count get one trailing zero row so the coupling blocks can
//! split the width in half.

mod batch;
mod cifar;
mod idx;
mod synthetic;
mod uci;

pub use batch::{next_batch, BatchPlan};
pub use cifar::{augment_cifar, crop_image, load_cifar10, CIFAR_DIM, CIFAR_PAD, CIFAR_SIDE};
pub use idx::{load_mnist, read_idx, IdxArray};
pub use synthetic::{synthetic_regression, synthetic_regression_with_noise, teacher};
pub use uci::{load_uci_csv, UCI_TRAIN_FRACTION};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Mat;
use crate::losses::TargetBatch;
use crate::revnet::RevnetError;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic { path: String, found: u32, expected: u32 },
    #[error("{path}: truncated ({detail})")]
    Truncated { path: String, detail: String },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path}: line {line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("target column {0:?} not found in header")]
    MissingColumn(String),
    #[error("expected {expected} rows per sample, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("requested {requested} samples from a dataset of {available}")]
    TooFew { requested: usize, available: usize },
    #[error("dataset is empty")]
    Empty,
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Revnet(#[from] RevnetError),
}

pub type Result<T> = std::result::Result<T, DataError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Normalization {
    /// Raw bytes divided by 255.
    UnitInterval,
    /// Per-channel `(x − mean) / std` after scaling to `[0, 1]`, train-split
    /// statistics.
    ChannelStandardized { mean: [f64; 3], std: [f64; 3] },
    /// Per-feature z-score with train-split statistics; targets likewise.
    ZScore,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    /// Feature count before padding.
    pub source_dim: usize,
    /// Trailing zero rows appended to make the width even (0 or 1).
    pub padded_rows: usize,
    pub normalization: Normalization,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub split: Split,
    /// `d × N`.
    pub x: Mat,
    pub targets: TargetBatch,
    pub d_y: usize,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.x.cols() == 0
    }

    pub fn d(&self) -> usize {
        self.x.rows()
    }

    /// Samples `idx`, in order.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            split: self.split,
            x: self.x.select_cols(idx),
            targets: self.targets.select(idx),
            d_y: self.d_y,
            meta: self.meta.clone(),
        }
    }

    /// Per-class counts for labelled data.
    pub fn label_histogram(&self) -> Option<Vec<usize>> {
        match &self.targets {
            TargetBatch::Labels(l) => {
                let mut h = vec![0; self.d_y];
                for &c in l {
                    h[c] += 1;
                }
                Some(h)
            }
            TargetBatch::Regression(_) => None,
        }
    }
}

/// `x` with one trailing zero row when its height is odd. Returns the padded
/// matrix and the number of rows added.
pub fn pad_even(x: Mat) -> (Mat, usize) {
    if x.rows().is_multiple_of(2) {
        return (x, 0);
    }
    let padded = Mat::vstack(&x, &Mat::zeros(1, x.cols())).expect("same column count");
    (padded, 1)
}

/// `k` samples drawn without replacement by `seed`, kept in dataset order.
pub fn subset(ds: &Dataset, k: usize, seed: u64) -> Result<Dataset> {
    if k > ds.len() {
        return Err(DataError::TooFew { requested: k, available: ds.len() });
    }
    if k == ds.len() {
        return Ok(ds.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, ds.len(), k).into_vec();
    idx.sort_unstable();
    Ok(ds.select(&idx))
}

#[cfg(test)]
mod tests;
