//! Binary checkpoint format.
//!
//! ```text
//! "RGN1"
//! u32 LE: d, d′, L, d_y, seed
//! per block: w1, w2, va, vb as row-major f64 LE
//! ```
//!
//! A sidecar `<file>.json` holds [`CheckpointMeta`].

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Activation, CouplingBlock, InitScheme, RevMlp, RevnetError};
use crate::linalg::Mat;

const MAGIC: &[u8; 4] = b"RGN1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub init: InitScheme,
    pub step: u64,
    pub config_hash: String,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub no_bottleneck: bool,
    #[serde(default)]
    pub epoch: Option<u64>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn save_checkpoint(path: &Path, model: &RevMlp, config_hash: &str, epoch: Option<u64>) -> Result<(), RevnetError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(MAGIC)?;
    for v in [model.d, model.d_prime, model.depth(), model.d_y] {
        let v = u32::try_from(v).map_err(|_| RevnetError::Checkpoint(format!("dimension {v} exceeds u32")))?;
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&model.seed.to_le_bytes())?;
    for b in &model.blocks {
        for m in [&b.w1, &b.w2, &b.va, &b.vb] {
            for v in m.as_slice() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    let meta = CheckpointMeta {
        init: model.init,
        step: model.step,
        config_hash: config_hash.to_string(),
        activation: model.activation,
        no_bottleneck: model.no_bottleneck,
        epoch,
    };
    let json = serde_json::to_string_pretty(&meta).map_err(|e| RevnetError::Checkpoint(e.to_string()))?;
    fs::write(sidecar_path(path), json + "\n")?;
    Ok(())
}

/// Reads a checkpoint and its sidecar. A missing sidecar is an error since
/// the activation and step counter live there.
pub fn load_checkpoint(path: &Path) -> Result<(RevMlp, CheckpointMeta), RevnetError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let meta_text = fs::read_to_string(sidecar_path(path))?;
    let meta: CheckpointMeta =
        serde_json::from_str(&meta_text).map_err(|e| RevnetError::Checkpoint(format!("sidecar: {e}")))?;

    if bytes.len() < 24 || &bytes[..4] != MAGIC {
        return Err(RevnetError::Checkpoint("bad magic".into()));
    }
    let field = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (d, d_prime, depth, d_y) = (field(0), field(1), field(2), field(3));
    let seed = field(4) as u32;
    if d == 0 || d % 2 != 0 || depth == 0 || d_prime == 0 {
        return Err(RevnetError::Checkpoint(format!("bad header d={d} d'={d_prime} L={depth}")));
    }
    let h = d / 2;
    let per_block = 4 * h * d_prime;
    let expected = 24 + 8 * per_block * depth;
    if bytes.len() != expected {
        return Err(RevnetError::Checkpoint(format!("expected {expected} bytes, found {}", bytes.len())));
    }
    let mut pos = 24;
    let mut read_mat = |rows: usize, cols: usize| -> Result<Mat, RevnetError> {
        let data = bytes[pos..pos + 8 * rows * cols]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        pos += 8 * rows * cols;
        Ok(Mat::from_vec(rows, cols, data)?)
    };
    let mut blocks = Vec::with_capacity(depth);
    for _ in 0..depth {
        let w1 = read_mat(h, d_prime)?;
        let w2 = read_mat(h, d_prime)?;
        let va = read_mat(d_prime, h)?;
        let vb = read_mat(d_prime, h)?;
        blocks.push(CouplingBlock::new(w1, w2, va, vb)?);
    }
    let mut model = RevMlp::from_blocks(blocks, d_y, meta.activation)?;
    model.seed = seed;
    model.init = meta.init;
    model.no_bottleneck = meta.no_bottleneck;
    model.set_step(meta.step);
    Ok((model, meta))
}
