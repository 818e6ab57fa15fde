use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{svd, LinalgError, Mat};

/// Regularization applied to the singular values of an SVD pseudoinverse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum PinvPolicy {
    /// Drop every singular value below `max(rtol · s_max, atol)`.
    Truncate { rtol: f64, atol: f64 },
    /// Invert `s_i + frac · s_max` for every singular value.
    Damp { frac: f64 },
    /// Perturb the input with Gaussian noise of standard deviation
    /// `frac · std(entries)`, then invert all nonzero singular values.
    Noise { frac: f64, seed: u64 },
}

impl Default for PinvPolicy {
    fn default() -> Self {
        PinvPolicy::Truncate { rtol: 0.01, atol: 1e-5 }
    }
}

impl PinvPolicy {
    /// No regularization: only singular values at rounding level
    /// (`max(m, n) · ε_mach · s_max`) are dropped.
    pub const EXACT: PinvPolicy = PinvPolicy::Truncate { rtol: 0.0, atol: 0.0 };

    pub fn validate(&self) -> Result<(), LinalgError> {
        let ok = match *self {
            PinvPolicy::Truncate { rtol, atol } => (0.0..1.0).contains(&rtol) && atol >= 0.0,
            PinvPolicy::Damp { frac } => (0.0..1.0).contains(&frac),
            PinvPolicy::Noise { frac, .. } => (0.0..1.0).contains(&frac),
        };
        if ok {
            Ok(())
        } else {
            Err(LinalgError::InvalidPolicy(*self))
        }
    }

    /// Derives an independent noise stream for one call site; other variants
    /// are returned unchanged.
    pub fn reseeded(&self, salt: u64) -> PinvPolicy {
        match *self {
            PinvPolicy::Noise { frac, seed } => PinvPolicy::Noise { frac, seed: mix(seed, salt) },
            other => other,
        }
    }
}

fn mix(a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over the combined words
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct Pseudoinverse {
    /// `n × m` for an `m × n` input.
    pub matrix: Mat,
    /// Number of singular values that were inverted.
    pub rank: usize,
    /// Every singular value was discarded; `matrix` is zero.
    pub degenerate: bool,
    pub singular_values: Vec<f64>,
}

pub fn pseudoinverse(a: &Mat, policy: PinvPolicy) -> Result<Pseudoinverse, LinalgError> {
    policy.validate()?;
    a.check_finite("pseudoinverse input")?;
    let noisy;
    let target = match policy {
        PinvPolicy::Noise { frac, seed } => {
            noisy = add_noise(a, frac, seed);
            &noisy
        }
        _ => a,
    };
    let f = svd(target)?;
    let s_max = f.s.first().copied().unwrap_or(0.0);
    // numerical rank: values at rounding level are exact zeros
    let floor = a.rows().max(a.cols()) as f64 * f64::EPSILON * s_max;

    let inv: Vec<f64> = match policy {
        PinvPolicy::Truncate { rtol, atol } => {
            let thr = (rtol * s_max).max(atol);
            f.s.iter().map(|&s| if s > floor && s >= thr { 1.0 / s } else { 0.0 }).collect()
        }
        PinvPolicy::Damp { frac } => {
            let shift = frac * s_max;
            f.s.iter().map(|&s| if s + shift > floor { 1.0 / (s + shift) } else { 0.0 }).collect()
        }
        PinvPolicy::Noise { .. } => f.s.iter().map(|&s| if s > floor { 1.0 / s } else { 0.0 }).collect(),
    };
    let kept: Vec<usize> = (0..inv.len()).filter(|&i| inv[i] != 0.0).collect();
    let (m, n) = a.shape();
    if kept.is_empty() {
        return Ok(Pseudoinverse {
            matrix: Mat::zeros(n, m),
            rank: 0,
            degenerate: true,
            singular_values: f.s,
        });
    }

    // a⁺ = V · diag(inv) · Uᵀ = (U_k · diag(inv) · Vt_k)ᵀ
    let u_k = f.u.select_cols(&kept);
    let mut scaled_vt = Mat::zeros(kept.len(), n);
    for (r, &i) in kept.iter().enumerate() {
        let w = inv[i];
        for (d, x) in scaled_vt.row_mut(r).iter_mut().zip(f.vt.row(i)) {
            *d = x * w;
        }
    }
    let matrix = u_k.matmul(&scaled_vt)?.transpose();
    matrix.check_finite("pseudoinverse output")?;
    Ok(Pseudoinverse { matrix, rank: kept.len(), degenerate: false, singular_values: f.s })
}

fn add_noise(a: &Mat, frac: f64, seed: u64) -> Mat {
    let n = a.as_slice().len() as f64;
    let mean = a.sum() / n;
    let var = a.as_slice().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = frac * var.sqrt();
    if sd == 0.0 {
        return a.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sd).expect("finite positive std");
    a.map(|v| v + normal.sample(&mut rng))
}
