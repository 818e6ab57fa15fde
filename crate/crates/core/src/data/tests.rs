use crate::linalg::Mat;
use crate::losses::TargetBatch;
use std::io::Write;
use std::path::{Path, PathBuf};

use flate2::write::GzEncoder;
use flate2::Compression;

use super::*;

fn repo_mnist() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")
}

fn idx_bytes(magic: u32, dims: &[u32], payload: &[u8]) -> Vec<u8> {
    let mut out = magic.to_be_bytes().to_vec();
    for d in dims {
        out.extend(d.to_be_bytes());
    }
    out.extend(payload);
    out
}

fn write(path: &Path, bytes: &[u8], gzip: bool) {
    let mut f = std::fs::File::create(path).unwrap();
    if gzip {
        let mut enc = GzEncoder::new(Vec::new(), Compression::fast());
        enc.write_all(bytes).unwrap();
        f.write_all(&enc.finish().unwrap()).unwrap();
    } else {
        f.write_all(bytes).unwrap();
    }
}

/// Tiny 3×3-pixel MNIST-shaped fixture (odd width, so one padding row).
fn mnist_fixture(dir: &Path, gzip: bool, n_labels: u32) {
    let ext = if gzip { ".gz" } else { "" };
    for prefix in ["train", "t10k"] {
        let pixels: Vec<u8> = (0..2 * 9).map(|i| (i * 15) as u8).collect();
        write(&dir.join(format!("{prefix}-images-idx3-ubyte{ext}")), &idx_bytes(0x803, &[2, 3, 3], &pixels), gzip);
        let labels: Vec<u8> = (0..n_labels as u8).collect();
        write(&dir.join(format!("{prefix}-labels-idx1-ubyte{ext}")), &idx_bytes(0x801, &[n_labels], &labels), gzip);
    }
}

#[test]
fn idx_fixture_plain_and_gzip() {
    for gzip in [false, true] {
        let dir = tempfile::tempdir().unwrap();
        mnist_fixture(dir.path(), gzip, 2);
        let (train, test) = load_mnist(dir.path()).unwrap();
        assert_eq!(train.d(), 10);
        assert_eq!(train.meta.padded_rows, 1);
        assert_eq!(train.meta.source_dim, 9);
        assert_eq!(train.x.row(9), &[0.0, 0.0]);
        assert_eq!(train.x[(1, 0)], 15.0 / 255.0);
        assert_eq!(train.x[(0, 1)], 135.0 / 255.0);
        assert_eq!(test.targets, crate::losses::TargetBatch::Labels(vec![0, 1]));
    }
}

#[test]
fn idx_errors() {
    let dir = tempfile::tempdir().unwrap();
    mnist_fixture(dir.path(), false, 3);
    assert!(matches!(load_mnist(dir.path()), Err(DataError::CountMismatch { images: 2, labels: 3 })));

    let bad = dir.path().join("bad");
    write(&bad, &idx_bytes(0x802, &[1], &[0]), false);
    assert!(matches!(read_idx(&bad, 0x801), Err(DataError::BadMagic { found: 0x802, .. })));
    write(&bad, &idx_bytes(0x803, &[2, 3, 3], &[0; 10]), false);
    assert!(matches!(read_idx(&bad, 0x803), Err(DataError::Truncated { .. })));
    write(&bad, &[0, 0], false);
    assert!(matches!(read_idx(&bad, 0x803), Err(DataError::Truncated { .. })));
    assert!(matches!(load_mnist(&dir.path().join("missing")), Err(DataError::Io { .. })));
}

#[test]
fn bundled_mnist() {
    let dir = repo_mnist();
    if !dir.join("train-images-idx3-ubyte.gz").exists() && !dir.join("train-images-idx3-ubyte").exists() {
        eprintln!("skipping: no MNIST files under {}", dir.display());
        return;
    }
    let (train, test) = load_mnist(&dir).unwrap();
    assert_eq!(train.d(), 784);
    assert_eq!(train.d_y, 10);
    // the canonical split when present, else the bundled 10k subset
    let sizes = (train.len(), test.len());
    assert!(sizes == (60000, 10000) || sizes == (8192, 1808), "{sizes:?}");
    assert!(train.x.as_slice().iter().all(|&p| (0.0..=1.0).contains(&p)));
    for ds in [&train, &test] {
        let hist = ds.label_histogram().unwrap();
        assert_eq!(hist.iter().sum::<usize>(), ds.len());
        assert!(hist.iter().all(|&c| c > 0), "{hist:?}");
    }
}

fn cifar_fixture(dir: &Path, per_batch: usize, ext: &str) {
    let mut k = 0u32;
    let mut record = |label: u8| {
        let mut r = vec![label];
        r.extend((0..CIFAR_DIM).map(|i| ((i as u32 * 7 + k * 13) % 256) as u8));
        k += 1;
        r
    };
    for name in (1..=5).map(|i| format!("data_batch_{i}")).chain(["test_batch".to_string()]) {
        let bytes: Vec<u8> = (0..per_batch).flat_map(|j| record((j % 10) as u8)).collect();
        write(&dir.join(format!("{name}{ext}")), &bytes, false);
    }
}

#[test]
fn cifar_fixture_loads_and_standardizes() {
    let dir = tempfile::tempdir().unwrap();
    cifar_fixture(dir.path(), 3, ".bin");
    let (train, test) = load_cifar10(dir.path()).unwrap();
    assert_eq!((train.len(), test.len(), train.d()), (15, 3, 3072));
    let Normalization::ChannelStandardized { mean, std } = train.meta.normalization else { panic!() };
    assert!(mean.iter().all(|m| m.is_finite()) && std.iter().all(|&s| s > 0.0));
    // train channels are standardized
    for c in 0..3 {
        let vals: Vec<f64> = (c * 1024..(c + 1) * 1024).flat_map(|i| train.x.row(i).to_vec()).collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / vals.len() as f64;
        assert!(m.abs() < 1e-10 && (v - 1.0).abs() < 1e-10);
    }
}

#[test]
fn cifar_record_size_checked() {
    let dir = tempfile::tempdir().unwrap();
    cifar_fixture(dir.path(), 2, "");
    let (train, _) = load_cifar10(dir.path()).unwrap();
    assert_eq!(train.len(), 10);
    let path = dir.path().join("test_batch");
    let mut bytes = std::fs::read(&path).unwrap();
    bytes.pop();
    std::fs::write(&path, bytes).unwrap();
    assert!(matches!(load_cifar10(dir.path()), Err(DataError::Truncated { .. })));
}

#[test]
fn augmentation() {
    let zeros = Mat::zeros(CIFAR_DIM, 3);
    assert_eq!(augment_cifar(&zeros, 1).unwrap(), zeros);
    let img: Vec<f64> = (0..CIFAR_DIM).map(|i| i as f64 + 1.0).collect();
    assert_eq!(crop_image(&img, CIFAR_PAD, CIFAR_PAD), img);
    // shifted crop: row 0 comes from padding, row 1 from source row 0
    let shifted = crop_image(&img, CIFAR_PAD - 1, CIFAR_PAD);
    assert_eq!(shifted[0], 0.0);
    assert_eq!(shifted[CIFAR_SIDE], img[0]);
    let x = Mat::from_fn(CIFAR_DIM, 4, |i, j| (i * 4 + j) as f64);
    assert_eq!(augment_cifar(&x, 7).unwrap(), augment_cifar(&x, 7).unwrap());
    assert_ne!(augment_cifar(&x, 7).unwrap(), augment_cifar(&x, 8).unwrap());
    assert!(matches!(augment_cifar(&Mat::zeros(784, 1), 0), Err(DataError::Shape { .. })));
}

const FIXTURE_CSV: &str = "a,b,target\n1.0,2.0,10\n3.0,4.0,20\n5.0,9.0,60\n";

#[test]
fn uci_fixture_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiny.csv");
    std::fs::write(&path, FIXTURE_CSV).unwrap();
    let (train, test) = load_uci_csv(&path, &["target"], 0).unwrap();
    // ⌈0.9·3⌉ = 3 would leave no test sample; one is always held out
    assert_eq!((train.len(), test.len()), (2, 1));
    assert_eq!(train.d(), 2);
    assert_eq!(train.meta.padded_rows, 0);
    // hand z-score of whichever rows landed in train
    let all: [[f64; 3]; 3] = [[1.0, 2.0, 10.0], [3.0, 4.0, 20.0], [5.0, 9.0, 60.0]];
    let TargetBatch::Regression(ty) = &test.targets else { panic!() };
    let test_row = all.iter().position(|r| {
        let tr: Vec<_> = all.iter().filter(|&q| q != r).collect();
        let (m, s) = (
            (tr[0][2] + tr[1][2]) / 2.0,
            (tr[0][2] - tr[1][2]).abs() / 2.0,
        );
        ((r[2] - m) / s - ty[(0, 0)]).abs() < 1e-12
    });
    assert!(test_row.is_some());
}

#[test]
fn uci_split_sizes_and_zscore() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("wine.csv");
    let mut text = String::from("f1,f2,f3,quality\n");
    for i in 0..57 {
        text.push_str(&format!("{},{},{},{}\n", i, (i * i) % 13, 1.5 * i as f64 - 3.0, i % 7));
    }
    std::fs::write(&path, text).unwrap();
    let (train, test) = load_uci_csv(&path, &["quality"], 3).unwrap();
    assert_eq!((train.len(), test.len()), (52, 5));
    // odd feature count padded
    assert_eq!((train.d(), train.meta.source_dim, train.meta.padded_rows), (4, 3, 1));
    for i in 0..3 {
        let row = train.x.row(i);
        let mean = row.iter().sum::<f64>() / row.len() as f64;
        assert!(mean.abs() <= 1e-10);
    }
    assert!(train.x.row(3).iter().all(|&v| v == 0.0));
    assert_eq!(load_uci_csv(&path, &["quality"], 3).unwrap().0, train);
}

#[test]
fn uci_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, FIXTURE_CSV).unwrap();
    assert!(matches!(load_uci_csv(&path, &["nope"], 0), Err(DataError::MissingColumn(_))));
    std::fs::write(&path, "a,target\n1,2\nx,3\n4,5\n").unwrap();
    assert!(matches!(load_uci_csv(&path, &["target"], 0), Err(DataError::Parse { line: 3, .. })));
}

#[test]
fn synthetic_data() {
    let (a, at) = synthetic_regression(8, 32, 4).unwrap();
    let (b, _) = synthetic_regression(8, 32, 4).unwrap();
    assert_eq!(a, b);
    assert_eq!((a.len(), at.len(), a.d(), a.d_y), (32, 8, 8, 8));
    let (clean, _) = synthetic_regression_with_noise(8, 16, 4, 0.0).unwrap();
    let TargetBatch::Regression(y) = &clean.targets else { panic!() };
    assert_eq!(&teacher(8, 4).unwrap().predict(&clean.x).unwrap(), y);
    let TargetBatch::Regression(y) = &a.targets else { panic!() };
    let mean = y.sum() / y.as_slice().len() as f64;
    let var = y.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.as_slice().len() as f64;
    assert!(var.is_finite() && var > 0.0);
    assert!(synthetic_regression(7, 4, 0).is_err());
}

#[test]
fn subset_cases() {
    let (ds, _) = synthetic_regression(4, 20, 1).unwrap();
    assert_eq!(subset(&ds, 20, 3).unwrap(), ds);
    let s = subset(&ds, 5, 3).unwrap();
    assert_eq!(s.len(), 5);
    assert_eq!(s, subset(&ds, 5, 3).unwrap());
    // every chosen column exists in the source
    for j in 0..5 {
        assert!((0..20).any(|k| ds.x.col(k) == s.x.col(j)));
    }
    assert!(matches!(subset(&ds, 21, 0), Err(DataError::TooFew { .. })));
}

#[test]
fn batching() {
    let (ds, _) = synthetic_regression(4, 10, 2).unwrap();
    let mut plan = BatchPlan::new(3, 9, ds.len()).unwrap();
    assert_eq!(plan.batches_per_epoch(), 3);
    let mut seen = Vec::new();
    for b in 0..3 {
        assert_eq!(plan.epoch(), 0, "batch {b}");
        seen.extend(plan.next_indices());
    }
    assert_eq!(plan.epoch(), 1);
    let mut sorted = seen.clone();
    sorted.sort_unstable();
    sorted.dedup();
    assert_eq!(sorted.len(), 9);

    let mut p1 = BatchPlan::new(4, 5, ds.len()).unwrap();
    let mut p2 = BatchPlan::new(4, 5, ds.len()).unwrap();
    for _ in 0..7 {
        assert_eq!(next_batch(&ds, &mut p1).unwrap(), next_batch(&ds, &mut p2).unwrap());
    }
    assert!(BatchPlan::new(11, 0, 10).is_err());
    let mut wrong = BatchPlan::new(2, 0, 5).unwrap();
    assert!(next_batch(&ds, &mut wrong).is_err());
}

#[test]
fn epochs_reshuffle() {
    let mut plan = BatchPlan::new(5, 1, 10).unwrap();
    let first: Vec<usize> = (0..2).flat_map(|_| plan.next_indices()).collect();
    let second: Vec<usize> = (0..2).flat_map(|_| plan.next_indices()).collect();
    assert_ne!(first, second);
    let mut s = second.clone();
    s.sort_unstable();
    assert_eq!(s, (0..10).collect::<Vec<_>>());
}
