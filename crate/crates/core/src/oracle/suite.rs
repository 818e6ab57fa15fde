//! Bundled oracle runs behind `revgn verify`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::*;
use crate::revnet::{init, Activation, CouplingBlock, InitScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuiteLevel {
    Fast,
    Full,
}

/// Model with `N(0, sigma²)` weights and a standard-normal batch.
///
/// Batches whose activation matrices lose column rank are redrawn (a ReLU
/// bottleneck can switch off every unit for one sample).
pub fn random_instance(d: usize, dp: usize, depth: usize, n: usize, seed: u32, sigma: f64) -> Result<(RevMlp, Mat)> {
    let model = init(d, dp, depth, d, seed, InitScheme::Gaussian { sigma })?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x1000 + seed as u64);
    let mut x = Mat::from_fn(d, n, |_, _| StandardNormal.sample(&mut rng));
    for _ in 0..32 {
        if n > dp || full_column_rank(&model, &x)? {
            break;
        }
        x = Mat::from_fn(d, n, |_, _| StandardNormal.sample(&mut rng));
    }
    Ok((model, x))
}

fn full_column_rank(model: &RevMlp, x: &Mat) -> Result<bool> {
    let (_, cache) = model.forward(x)?;
    for c in cache.blocks() {
        for s in [&c.s1, &c.s2] {
            let sv = crate::linalg::svd(s)?.s;
            if sv.last().copied().unwrap_or(0.0) <= 1e-6 * sv[0] {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Random symmetric positive definite `m × m` matrix, `G Gᵀ/m + I/2`.
pub fn random_spd(m: usize, seed: u64) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Mat::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
    let mut h = g.matmul_t(&g).expect("square").scale(1.0 / m as f64);
    for i in 0..m {
        h[(i, i)] += 0.5;
    }
    h
}

/// Regression targets `x + 0.1·U(−1, 1)` for trajectory checks.
pub fn nearby_targets(x: &Mat, seed: u64) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    x.map(|v| v + 0.1 * rng.gen_range(-1.0..1.0))
}

fn failed(check: &str, err: OracleError) -> OracleReport {
    let mut residuals = BTreeMap::new();
    residuals.insert("error".into(), f64::NAN);
    let mut instance_params = BTreeMap::new();
    instance_params.insert("error".into(), serde_json::Value::String(err.to_string()));
    OracleReport { check: check.into(), instance_params, residuals, pass: false }
}

fn collect(out: &mut Vec<OracleReport>, check: &str, r: Result<OracleReport>) {
    out.push(r.unwrap_or_else(|e| failed(check, e)));
}

/// Instance family of the right-inverse checks: `d ∈ {4, 8}`,
/// `d′ ∈ {8, 16}`, `L ∈ {1, 2, 3}`, `n ∈ {2, 3}`.
pub fn instance_family(count: usize) -> Vec<(usize, usize, usize, usize, u32)> {
    (0..count)
        .map(|i| {
            let d = [4, 8][i % 2];
            let dp = [8, 16][(i / 2) % 2];
            let depth = 1 + i % 3;
            let n = 2 + (i / 3) % 2;
            (d, dp, depth, n, 100 + i as u32)
        })
        .collect()
}

/// Zero-weight one-block model (B = 0).
fn zero_weight_model(d: usize, dp: usize, seed: u32) -> Result<RevMlp> {
    let base = init(d, dp, 1, d, seed, InitScheme::Xavier)?;
    let b = &base.blocks()[0];
    let h = d / 2;
    let blk = CouplingBlock::new(Mat::zeros(h, dp), Mat::zeros(h, dp), b.va().clone(), b.vb().clone())?;
    Ok(RevMlp::from_blocks(vec![blk], d, Activation::Relu)?)
}

fn linear_model(d: usize, dp: usize, depth: usize, seed: u32) -> Result<RevMlp> {
    let base = init(d, dp, depth, d, seed, InitScheme::Gaussian { sigma: 0.3 })?;
    Ok(RevMlp::from_blocks(base.blocks().to_vec(), d, Activation::Linear)?)
}

/// `J v` via forward mode against the dense Jacobian.
fn check_forward_mode(model: &RevMlp, x: &Mat, seed: u64) -> Result<OracleReport> {
    let mut rep = OracleReport::new("forward_mode_vs_dense", model, x.cols());
    let j = dense_jacobian(model, x)?.j;
    let (_, cache) = model.forward(x)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let v: Vec<f64> = (0..model.num_trainable()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dirs = unflatten_params(model, &v)?;
        let jv = model.forward_jvp(&cache, None, &dirs)?.vec_colmajor();
        let dense = j.matvec(&v)?;
        let err = jv.iter().zip(&dense).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
            / dense.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-300);
        worst = worst.max(err);
    }
    rep.bound("max_rel_forward_vs_dense", worst, 1e-9);
    Ok(rep)
}

pub fn run_suite(level: SuiteLevel) -> Vec<OracleReport> {
    let count = match level {
        SuiteLevel::Fast => 6,
        SuiteLevel::Full => 20,
    };
    let mut out = Vec::new();
    for (d, dp, depth, n, seed) in instance_family(count) {
        match random_instance(d, dp, depth, n, seed, 0.3) {
            Ok((model, x)) => {
                collect(&mut out, "right_inverse", check_right_inverse(&model, &x, 50, seed as u64));
                collect(&mut out, "layerwise_mpp", check_layerwise_mpp(&model, &x));
                collect(&mut out, "forward_mode_vs_dense", check_forward_mode(&model, &x, seed as u64));
                let y = nearby_targets(&x, seed as u64);
                collect(&mut out, "gn_step_dense", check_gn_step_dense(&model, &x, &y, 0.5, layerwise_deltas));
            }
            Err(e) => out.push(failed("instance", e)),
        }
    }
    let extra: [(&str, Result<RevMlp>); 2] =
        [("layerwise_mpp_zero_weights", zero_weight_model(4, 8, 3)), ("layerwise_mpp_linear", linear_model(4, 8, 2, 4))];
    for (name, model) in extra {
        let r = model.and_then(|m| {
            // n ≤ d/2 so the linear activations keep full column rank
            let x = random_instance(4, 8, 1, 2, 9, 0.3)?.1;
            let mut rep = check_layerwise_mpp(&m, &x)?;
            rep.check = name.into();
            Ok(rep)
        });
        collect(&mut out, name, r);
    }

    // projection: over- and under-parameterized, H = I and random SPD
    for (d, dp, n, seed) in [(4, 8, 2, 1u32), (4, 2, 4, 2)] {
        let r = random_instance(d, dp, 1, n, seed, 0.3);
        for spd in [false, true] {
            let r = r.as_ref().map_err(|e| OracleError::Precondition(e.to_string())).and_then(|(m, x)| {
                let dn = d * n;
                let h = if spd { random_spd(dn, seed as u64) } else { Mat::identity(dn) };
                check_projection(m, x, &h)
            });
            collect(&mut out, "projection", r);
        }
    }

    // Newton in function space
    for (depth, spd) in [(1, false), (2, true)] {
        let r = random_instance(4, 16, depth, 2, 7, 0.3).and_then(|(m, x)| {
            let y = nearby_targets(&x, 7);
            let h = if spd { random_spd(8, 3) } else { Mat::identity(8) };
            check_newton_function_space(&m, &x, &y, &h)
        });
        collect(&mut out, "newton_function_space", r);
    }

    if level == SuiteLevel::Full {
        let r = random_instance(4, 8, 2, 2, 11, 1e-3).and_then(|(m, x)| {
            let y = nearby_targets(&x, 11);
            check_right_inverse_equivalence(&m, &x, &y, &[0.2, 0.1, 0.05], 20)
        });
        collect(&mut out, "right_inverse_equivalence", r);
    }
    out
}
