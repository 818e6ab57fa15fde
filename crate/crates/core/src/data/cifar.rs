//! CIFAR-10 binary batches and pad-and-crop augmentation.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DataError, Dataset, DatasetMeta, Normalization, Result, Split};
use crate::linalg::Mat;
use crate::losses::TargetBatch;

pub const CIFAR_SIDE: usize = 32;
pub const CIFAR_DIM: usize = 3 * CIFAR_SIDE * CIFAR_SIDE;
/// Zero padding on each spatial side before cropping.
pub const CIFAR_PAD: usize = 4;
const RECORD: usize = CIFAR_DIM + 1;
const PLANE: usize = CIFAR_SIDE * CIFAR_SIDE;

fn read_batches(dir: &Path, names: &[String]) -> Result<(Mat, Vec<usize>)> {
    let mut records = Vec::new();
    for name in names {
        let mut path = dir.join(format!("{name}.bin"));
        if !path.exists() {
            path = dir.join(name);
        }
        let bytes = fs::read(&path).map_err(|source| DataError::Io { path: path.display().to_string(), source })?;
        if bytes.is_empty() || bytes.len() % RECORD != 0 {
            return Err(DataError::Truncated {
                path: path.display().to_string(),
                detail: format!("{} bytes is not a whole number of {RECORD}-byte records", bytes.len()),
            });
        }
        records.push(bytes);
    }
    let n: usize = records.iter().map(|b| b.len() / RECORD).sum();
    let mut x = Mat::zeros(CIFAR_DIM, n);
    let mut labels = Vec::with_capacity(n);
    let mut j = 0;
    for bytes in &records {
        for rec in bytes.chunks_exact(RECORD) {
            if rec[0] >= 10 {
                return Err(DataError::Invalid(format!("label {} outside 0..10", rec[0])));
            }
            labels.push(rec[0] as usize);
            for (i, &p) in rec[1..].iter().enumerate() {
                x[(i, j)] = p as f64 / 255.0;
            }
            j += 1;
        }
    }
    Ok((x, labels))
}

fn channel_stats(x: &Mat) -> ([f64; 3], [f64; 3]) {
    let (mut mean, mut std) = ([0.0; 3], [0.0; 3]);
    let count = (PLANE * x.cols()) as f64;
    for c in 0..3 {
        let rows = c * PLANE..(c + 1) * PLANE;
        let sum: f64 = rows.clone().map(|i| x.row(i).iter().sum::<f64>()).sum();
        mean[c] = sum / count;
        let sq: f64 = rows.map(|i| x.row(i).iter().map(|v| (v - mean[c]).powi(2)).sum::<f64>()).sum();
        std[c] = (sq / count).sqrt();
    }
    (mean, std)
}

fn standardize(x: &mut Mat, mean: &[f64; 3], std: &[f64; 3]) {
    for c in 0..3 {
        let s = if std[c] > 0.0 { std[c] } else { 1.0 };
        for i in c * PLANE..(c + 1) * PLANE {
            x.row_mut(i).iter_mut().for_each(|v| *v = (*v - mean[c]) / s);
        }
    }
}

/// `data_batch_1..5` and `test_batch` (with or without `.bin`) from `dir`,
/// standardized per channel with train statistics.
pub fn load_cifar10(dir: &Path) -> Result<(Dataset, Dataset)> {
    let train_names: Vec<String> = (1..=5).map(|i| format!("data_batch_{i}")).collect();
    let (mut xtr, ytr) = read_batches(dir, &train_names)?;
    let (mut xte, yte) = read_batches(dir, &["test_batch".to_string()])?;
    let (mean, std) = channel_stats(&xtr);
    standardize(&mut xtr, &mean, &std);
    standardize(&mut xte, &mean, &std);
    let meta = DatasetMeta {
        source_dim: CIFAR_DIM,
        padded_rows: 0,
        normalization: Normalization::ChannelStandardized { mean, std },
    };
    let make = |x, y, split| Dataset { name: "cifar10".into(), split, x, targets: TargetBatch::Labels(y), d_y: 10, meta: meta.clone() };
    Ok((make(xtr, ytr, Split::Train), make(xte, yte, Split::Test)))
}

/// One flattened `3 × 32 × 32` image, zero-padded by [`CIFAR_PAD`] and
/// cropped back to 32×32 at offset `(dy, dx)` into the padded image.
pub fn crop_image(img: &[f64], dy: usize, dx: usize) -> Vec<f64> {
    let mut out = vec![0.0; CIFAR_DIM];
    for c in 0..3 {
        for i in 0..CIFAR_SIDE {
            let si = i + dy;
            if !(CIFAR_PAD..CIFAR_PAD + CIFAR_SIDE).contains(&si) {
                continue;
            }
            for j in 0..CIFAR_SIDE {
                let sj = j + dx;
                if !(CIFAR_PAD..CIFAR_PAD + CIFAR_SIDE).contains(&sj) {
                    continue;
                }
                out[c * PLANE + i * CIFAR_SIDE + j] = img[c * PLANE + (si - CIFAR_PAD) * CIFAR_SIDE + (sj - CIFAR_PAD)];
            }
        }
    }
    out
}

/// Random pad-and-crop of every column of a CIFAR batch.
pub fn augment_cifar(x_batch: &Mat, seed: u64) -> Result<Mat> {
    if x_batch.rows() != CIFAR_DIM {
        return Err(DataError::Shape { expected: CIFAR_DIM, got: x_batch.rows() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Mat::zeros(CIFAR_DIM, x_batch.cols());
    for j in 0..x_batch.cols() {
        let dy = rng.gen_range(0..=2 * CIFAR_PAD);
        let dx = rng.gen_range(0..=2 * CIFAR_PAD);
        for (i, v) in crop_image(&x_batch.col(j), dy, dx).into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    Ok(out)
}
