//! Function-space objectives and their gradients with respect to the
//! network output.
//!
//! Both losses are averaged over the batch, and so is the functional
//! gradient `ε`, which makes `ε` the exact gradient of [`loss_value`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Mat;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("label {label} out of range for {classes} classes")]
    LabelRange { label: usize, classes: usize },
    #[error("{0} targets do not match logits of shape {1:?}")]
    Shape(&'static str, (usize, usize)),
    #[error("cross-entropy requires class labels")]
    NeedsLabels,
    #[error("non-finite regression target")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TargetBatch {
    Labels(Vec<usize>),
    /// `d_y × n`.
    Regression(Mat),
}

impl TargetBatch {
    pub fn len(&self) -> usize {
        match self {
            TargetBatch::Labels(l) => l.len(),
            TargetBatch::Regression(m) => m.cols(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Columns `idx`, in order.
    pub fn select(&self, idx: &[usize]) -> TargetBatch {
        match self {
            TargetBatch::Labels(l) => TargetBatch::Labels(idx.iter().map(|&i| l[i]).collect()),
            TargetBatch::Regression(m) => TargetBatch::Regression(m.select_cols(idx)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    SquareLoss,
    CrossEntropy,
}

fn check(kind: LossKind, logits: &Mat, y: &TargetBatch) -> Result<(), LossError> {
    let (d_y, n) = logits.shape();
    match y {
        TargetBatch::Labels(labels) => {
            if labels.len() != n {
                return Err(LossError::Shape("label", logits.shape()));
            }
            if let Some(&label) = labels.iter().find(|&&l| l >= d_y) {
                return Err(LossError::LabelRange { label, classes: d_y });
            }
        }
        TargetBatch::Regression(t) => {
            if kind == LossKind::CrossEntropy {
                return Err(LossError::NeedsLabels);
            }
            if t.shape() != (d_y, n) {
                return Err(LossError::Shape("regression", logits.shape()));
            }
            if !t.is_finite() {
                return Err(LossError::NonFinite);
            }
        }
    }
    Ok(())
}

/// Target as a dense `d_y × n` matrix (one-hot for labels).
fn dense_target(y: &TargetBatch, d_y: usize) -> Mat {
    match y {
        TargetBatch::Labels(labels) => {
            let mut t = Mat::zeros(d_y, labels.len());
            for (j, &l) in labels.iter().enumerate() {
                t[(l, j)] = 1.0;
            }
            t
        }
        TargetBatch::Regression(t) => t.clone(),
    }
}

/// Column-wise `(max, log Σ exp(f − max))`.
fn log_sum_exp(logits: &Mat) -> Vec<f64> {
    let (d_y, n) = logits.shape();
    (0..n)
        .map(|j| {
            let mx = (0..d_y).map(|i| logits[(i, j)]).fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = (0..d_y).map(|i| (logits[(i, j)] - mx).exp()).sum();
            mx + s.ln()
        })
        .collect()
}

pub fn loss_value(kind: LossKind, logits: &Mat, y: &TargetBatch) -> Result<f64, LossError> {
    check(kind, logits, y)?;
    let n = logits.cols() as f64;
    match kind {
        LossKind::SquareLoss => {
            let t = dense_target(y, logits.rows());
            let r = logits.sub(&t).expect("checked shape");
            Ok(0.5 * r.frobenius_norm().powi(2) / n)
        }
        LossKind::CrossEntropy => {
            let TargetBatch::Labels(labels) = y else { unreachable!("checked") };
            let lse = log_sum_exp(logits);
            let total: f64 = labels.iter().enumerate().map(|(j, &l)| lse[j] - logits[(l, j)]).sum();
            Ok(total / n)
        }
    }
}

/// `ε = ∂ loss_value / ∂ f` as a `d × n` matrix; rows `d_y..d` are zero.
pub fn functional_gradient(kind: LossKind, logits: &Mat, y: &TargetBatch, d: usize) -> Result<Mat, LossError> {
    check(kind, logits, y)?;
    let (d_y, n) = logits.shape();
    if d < d_y {
        return Err(LossError::Shape("output width", logits.shape()));
    }
    let t = dense_target(y, d_y);
    let inv_n = 1.0 / n as f64;
    let mut eps = Mat::zeros(d, n);
    match kind {
        LossKind::SquareLoss => {
            for i in 0..d_y {
                for j in 0..n {
                    eps[(i, j)] = (logits[(i, j)] - t[(i, j)]) * inv_n;
                }
            }
        }
        LossKind::CrossEntropy => {
            let lse = log_sum_exp(logits);
            for i in 0..d_y {
                for j in 0..n {
                    eps[(i, j)] = ((logits[(i, j)] - lse[j]).exp() - t[(i, j)]) * inv_n;
                }
            }
        }
    }
    Ok(eps)
}

/// Index of the largest entry in each column; ties go to the lowest row.
pub fn argmax_cols(logits: &Mat) -> Vec<usize> {
    let (d_y, n) = logits.shape();
    (0..n)
        .map(|j| {
            let mut best = 0;
            for i in 1..d_y {
                if logits[(i, j)] > logits[(best, j)] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Fraction of columns whose argmax equals the label. Regression targets
/// and empty batches give 0.
pub fn accuracy(logits: &Mat, y: &TargetBatch) -> f64 {
    let TargetBatch::Labels(labels) = y else { return 0.0 };
    if labels.is_empty() {
        return 0.0;
    }
    let hits = argmax_cols(logits).iter().zip(labels).filter(|(p, l)| p == l).count();
    hits as f64 / labels.len() as f64
}
