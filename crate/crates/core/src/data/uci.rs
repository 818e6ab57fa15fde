//! Numeric CSV regression sets (Superconductivity, Wine quality).

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DataError, Dataset, DatasetMeta, Normalization, Result, Split};
use crate::linalg::Mat;
use crate::losses::TargetBatch;

pub const UCI_TRAIN_FRACTION: f64 = 0.9;

/// Per-row mean and standard deviation over the columns `cols`.
fn row_stats(m: &Mat, cols: &[usize]) -> Vec<(f64, f64)> {
    let n = cols.len() as f64;
    (0..m.rows())
        .map(|i| {
            let row = m.row(i);
            let mean = cols.iter().map(|&j| row[j]).sum::<f64>() / n;
            let var = cols.iter().map(|&j| (row[j] - mean).powi(2)).sum::<f64>() / n;
            (mean, var.sqrt())
        })
        .collect()
}

fn zscore(m: &mut Mat, stats: &[(f64, f64)]) {
    for (i, &(mean, std)) in stats.iter().enumerate() {
        let s = if std > 0.0 { std } else { 1.0 };
        m.row_mut(i).iter_mut().for_each(|v| *v = (*v - mean) / s);
    }
}

/// Headered numeric CSV split 90/10 by a seeded shuffle. Columns named in
/// `target_cols` become regression targets, all others features. Features
/// and targets are z-scored with train statistics.
pub fn load_uci_csv(path: &Path, target_cols: &[&str], seed: u64) -> Result<(Dataset, Dataset)> {
    let name = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(&name, e))?;
    let header: Vec<String> = reader.headers().map_err(|e| csv_error(&name, e))?.iter().map(|s| s.trim().to_string()).collect();
    let mut target_idx = Vec::with_capacity(target_cols.len());
    for t in target_cols {
        target_idx.push(header.iter().position(|h| h == t).ok_or_else(|| DataError::MissingColumn(t.to_string()))?);
    }
    if target_idx.is_empty() {
        return Err(DataError::Invalid("at least one target column is required".into()));
    }
    let feature_idx: Vec<usize> = (0..header.len()).filter(|i| !target_idx.contains(i)).collect();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(&name, e))?;
        let line = r + 2;
        let vals = rec
            .iter()
            .map(|cell| match cell.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(DataError::Parse { path: name.clone(), line, msg: format!("non-numeric cell {cell:?}") }),
            })
            .collect::<Result<Vec<f64>>>()?;
        if vals.len() != header.len() {
            return Err(DataError::Parse { path: name.clone(), line, msg: format!("{} cells, header has {}", vals.len(), header.len()) });
        }
        rows.push(vals);
    }
    let n = rows.len();
    if n < 2 {
        return Err(DataError::Empty);
    }
    let mut x = Mat::from_fn(feature_idx.len(), n, |i, j| rows[j][feature_idx[i]]);
    let mut y = Mat::from_fn(target_idx.len(), n, |i, j| rows[j][target_idx[i]]);

    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((UCI_TRAIN_FRACTION * n as f64).ceil() as usize).min(n - 1);
    let (train_idx, test_idx) = perm.split_at(n_train);
    let fx = row_stats(&x, train_idx);
    let fy = row_stats(&y, train_idx);
    zscore(&mut x, &fx);
    zscore(&mut y, &fy);
    let source_dim = x.rows();
    let (x, padded_rows) = super::pad_even(x);
    let meta = DatasetMeta { source_dim, padded_rows, normalization: Normalization::ZScore };
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "uci".into());
    let make = |idx: &[usize], split| Dataset {
        name: stem.clone(),
        split,
        x: x.select_cols(idx),
        targets: TargetBatch::Regression(y.select_cols(idx)),
        d_y: target_idx.len(),
        meta: meta.clone(),
    };
    Ok((make(train_idx, Split::Train), make(test_idx, Split::Test)))
}

fn csv_error(path: &str, e: csv::Error) -> DataError {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    DataError::Parse { path: path.into(), line, msg: e.to_string() }
}
