//! Teacher-generated regression data for fast runs and exact-fit tests.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{DataError, Dataset, DatasetMeta, Normalization, Result, Split};
use crate::linalg::Mat;
use crate::losses::TargetBatch;
use crate::revnet::{init, InitScheme, RevMlp};

const NOISE: f64 = 0.01;

/// Frozen teacher network: `d′ = 2d`, two blocks, Xavier weights.
pub fn teacher(d: usize, seed: u64) -> Result<RevMlp> {
    Ok(init(d, 2 * d, 2, d, seed as u32, InitScheme::Xavier)?)
}

/// [`synthetic_regression_with_noise`] at noise level 0.01.
pub fn synthetic_regression(d: usize, n: usize, teacher_seed: u64) -> Result<(Dataset, Dataset)> {
    synthetic_regression_with_noise(d, n, teacher_seed, NOISE)
}

/// `n` training and `max(n / 4, 1)` test samples with `x ~ N(0, I)` and
/// targets `teacher(x) + noise · N(0, I)` over all `d` output rows.
pub fn synthetic_regression_with_noise(d: usize, n: usize, teacher_seed: u64, noise: f64) -> Result<(Dataset, Dataset)> {
    if d == 0 || !d.is_multiple_of(2) {
        return Err(DataError::Invalid(format!("synthetic width must be even and positive, got {d}")));
    }
    if n == 0 {
        return Err(DataError::Empty);
    }
    if !(noise >= 0.0) {
        return Err(DataError::Invalid(format!("noise must be non-negative, got {noise}")));
    }
    let t = teacher(d, teacher_seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(teacher_seed ^ 0x5EED_DA7A);
    let meta = DatasetMeta { source_dim: d, padded_rows: 0, normalization: Normalization::None };
    let mut make = |count: usize, split: Split| -> Result<Dataset> {
        let x = Mat::from_fn(d, count, |_, _| StandardNormal.sample(&mut rng));
        let mut y = t.predict(&x)?;
        if noise > 0.0 {
            let dist = Normal::new(0.0, noise).expect("finite non-negative sigma");
            y.as_mut_slice().iter_mut().for_each(|v| *v += dist.sample(&mut rng));
        }
        Ok(Dataset { name: "synthetic".into(), split, x, targets: TargetBatch::Regression(y), d_y: d, meta: meta.clone() })
    };
    let train = make(n, Split::Train)?;
    let test = make((n / 4).max(1), Split::Test)?;
    Ok((train, test))
}
