//! IDX container (big-endian header, optional gzip) and the MNIST loader.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use super::{DataError, Dataset, DatasetMeta, Normalization, Result, Split};
use crate::linalg::Mat;
use crate::losses::TargetBatch;

pub const MAGIC_IMAGES: u32 = 0x0000_0803;
pub const MAGIC_LABELS: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let io = |source| DataError::Io { path: path.display().to_string(), source };
    let raw = fs::read(path).map_err(io)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..]).read_to_end(&mut out).map_err(io)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Parse an unsigned-byte IDX file with the given magic number.
pub fn read_idx(path: &Path, magic: u32) -> Result<IdxArray> {
    let bytes = read_bytes(path)?;
    let name = || path.display().to_string();
    let word = |i: usize| -> Result<u32> {
        bytes
            .get(4 * i..4 * i + 4)
            .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| DataError::Truncated { path: name(), detail: "header".into() })
    };
    let found = word(0)?;
    if found != magic {
        return Err(DataError::BadMagic { path: name(), found, expected: magic });
    }
    let ndim = (magic & 0xff) as usize;
    let dims = (1..=ndim).map(|i| word(i).map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    let start = 4 * (ndim + 1);
    let len: usize = dims.iter().product();
    let body = &bytes[start.min(bytes.len())..];
    if body.len() < len {
        return Err(DataError::Truncated { path: name(), detail: format!("{} of {len} payload bytes", body.len()) });
    }
    Ok(IdxArray { dims, data: body[..len].to_vec() })
}

/// `dir/stem` or `dir/stem.gz`, whichever exists.
fn locate(dir: &Path, stem: &str) -> PathBuf {
    let plain = dir.join(stem);
    if plain.exists() {
        return plain;
    }
    let gz = dir.join(format!("{stem}.gz"));
    if gz.exists() {
        gz
    } else {
        plain
    }
}

fn load_split(dir: &Path, prefix: &str, split: Split) -> Result<Dataset> {
    let images = read_idx(&locate(dir, &format!("{prefix}-images-idx3-ubyte")), MAGIC_IMAGES)?;
    let labels = read_idx(&locate(dir, &format!("{prefix}-labels-idx1-ubyte")), MAGIC_LABELS)?;
    let n = images.dims[0];
    if labels.dims[0] != n {
        return Err(DataError::CountMismatch { images: n, labels: labels.dims[0] });
    }
    if n == 0 {
        return Err(DataError::Empty);
    }
    let d = images.dims[1] * images.dims[2];
    let mut x = Mat::zeros(d, n);
    for (j, img) in images.data.chunks_exact(d).enumerate() {
        for (i, &p) in img.iter().enumerate() {
            x[(i, j)] = p as f64 / 255.0;
        }
    }
    let y: Vec<usize> = labels.data.iter().map(|&l| l as usize).collect();
    if let Some(&bad) = y.iter().find(|&&l| l >= 10) {
        return Err(DataError::Invalid(format!("label {bad} outside 0..10")));
    }
    let (x, padded_rows) = super::pad_even(x);
    Ok(Dataset {
        name: "mnist".into(),
        split,
        x,
        targets: TargetBatch::Labels(y),
        d_y: 10,
        meta: DatasetMeta { source_dim: d, padded_rows, normalization: Normalization::UnitInterval },
    })
}

/// Train and test splits from the four standard IDX files in `dir`.
pub fn load_mnist(dir: &Path) -> Result<(Dataset, Dataset)> {
    Ok((load_split(dir, "train", Split::Train)?, load_split(dir, "t10k", Split::Test)?))
}
