//! Brute-force dense checks of the identities behind the layer-wise
//! Gauss-Newton update. Everything here materializes full Jacobians and is
//! only meant for tiny instances.
//!
//! Vectorization is column-major throughout: activation entry `(i, j)` of a
//! `d × n` matrix is coordinate `i + d·j`, weight entry `(i, k)` of a
//! `d/2 × d′` matrix is `i + (d/2)·k`. Parameters are ordered block by block,
//! `W¹` before `W²`. With this convention `∂vec(W s)/∂vec(W) = sᵀ ⊗ I`.

mod suite;

pub use suite::{instance_family, nearby_targets, random_instance, random_spd, run_suite, SuiteLevel};

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{inverse, pseudoinverse, sym_eigen, LinalgError, Mat, PinvPolicy};
use crate::optim::{right_inverse_apply, OptimError};
use crate::revnet::{ActivationCache, RevMlp, RevnetError, WeightPair};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("instance too large for dense checks: {0}")]
    TooLarge(String),
    #[error("block {block} activation matrix {half} is rank deficient (s_min/s_max = {ratio:e})")]
    RankDeficient { block: usize, half: u8, ratio: f64 },
    #[error("weighting matrix is not symmetric positive definite")]
    NotSpd,
    #[error("check requires {0}")]
    Precondition(String),
    #[error("trajectory diverged at step {step} (alpha {alpha})")]
    Diverged { alpha: f64, step: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Revnet(#[from] RevnetError),
    #[error(transparent)]
    Optim(#[from] OptimError),
}

type Result<T> = std::result::Result<T, OracleError>;

/// Machine-readable outcome of one check.
#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub check: String,
    pub instance_params: BTreeMap<String, serde_json::Value>,
    pub residuals: BTreeMap<String, f64>,
    pub pass: bool,
}

impl OracleReport {
    fn new(check: &str, model: &RevMlp, n: usize) -> Self {
        let mut p = BTreeMap::new();
        p.insert("d".into(), model.d().into());
        p.insert("d_prime".into(), model.d_prime().into());
        p.insert("depth".into(), model.depth().into());
        p.insert("n".into(), n.into());
        p.insert("seed".into(), model.seed().into());
        Self { check: check.into(), instance_params: p, residuals: BTreeMap::new(), pass: true }
    }

    /// Records `value` and fails the report unless `value <= bound`.
    fn bound(&mut self, name: &str, value: f64, bound: f64) {
        self.residuals.insert(name.into(), value);
        if !(value <= bound) {
            self.pass = false;
        }
    }

    fn note(&mut self, name: &str, value: f64) {
        self.residuals.insert(name.into(), value);
    }

    fn param(&mut self, name: &str, value: impl Into<serde_json::Value>) {
        self.instance_params.insert(name.into(), value.into());
    }
}

const MAX_OUTPUTS: usize = 512;
const MAX_PARAMS: usize = 4096;

fn guard(model: &RevMlp, n: usize) -> Result<()> {
    let rows = model.d() * n;
    let p = model.num_trainable();
    if rows > MAX_OUTPUTS || p > MAX_PARAMS {
        return Err(OracleError::TooLarge(format!("n·d = {rows} (max {MAX_OUTPUTS}), p = {p} (max {MAX_PARAMS})")));
    }
    Ok(())
}

/// Flattens per-block weights into one parameter vector.
pub fn flatten_params(pairs: &[WeightPair]) -> Vec<f64> {
    pairs.iter().flat_map(|p| p.w1.vec_colmajor().into_iter().chain(p.w2.vec_colmajor())).collect()
}

/// Inverse of [`flatten_params`] for the shapes of `model`.
pub fn unflatten_params(model: &RevMlp, v: &[f64]) -> Result<Vec<WeightPair>> {
    let (h, dp) = (model.half(), model.d_prime());
    let per = h * dp;
    if v.len() != 2 * per * model.depth() {
        return Err(LinalgError::DataLength { expected: 2 * per * model.depth(), got: v.len() }.into());
    }
    (0..model.depth())
        .map(|b| {
            let base = 2 * per * b;
            Ok(WeightPair {
                w1: Mat::from_colmajor(h, dp, &v[base..base + per])?,
                w2: Mat::from_colmajor(h, dp, &v[base + per..base + 2 * per])?,
            })
        })
        .collect()
}

fn kron(a: &Mat, b: &Mat) -> Mat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    Mat::from_fn(ar * br, ac * bc, |r, c| a[(r / br, c / bc)] * b[(r % br, c % bc)])
}

#[derive(Debug, Clone)]
pub struct DenseJacobian {
    /// `n·d × p`.
    pub j: Mat,
    /// Largest relative error of `J v` against central differences over the
    /// random directions sampled during assembly.
    pub fd_rel_error: f64,
}

/// Full Jacobian of the vectorized output with respect to all trainable
/// weights, one row per output coordinate obtained by a unit-cotangent
/// reverse pass.
pub fn dense_jacobian(model: &RevMlp, x: &Mat) -> Result<DenseJacobian> {
    let n = x.cols();
    guard(model, n)?;
    let d = model.d();
    let (_, cache) = model.forward(x)?;
    let p = model.num_trainable();
    let mut j = Mat::zeros(d * n, p);
    let mut u = Mat::zeros(d, n);
    for col in 0..n {
        for i in 0..d {
            u[(i, col)] = 1.0;
            let g = flatten_params(&model.vjp(&cache, &u)?);
            j.row_mut(i + d * col).copy_from_slice(&g);
            u[(i, col)] = 0.0;
        }
    }
    let fd_rel_error = fd_cross_check(model, x, &j, 20, 0x5EED)?;
    Ok(DenseJacobian { j, fd_rel_error })
}

/// Central-difference check of `J v` for `count` random parameter
/// directions; returns the worst relative error.
fn fd_cross_check(model: &RevMlp, x: &Mat, j: &Mat, count: usize, seed: u64) -> Result<f64> {
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta = flatten_params(&model.weights());
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let v: Vec<f64> = (0..theta.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let shifted = |s: f64| -> Result<Vec<f64>> {
            let t: Vec<f64> = theta.iter().zip(&v).map(|(a, b)| a + s * b).collect();
            Ok(with_params(model, &t)?.predict(x)?.vec_colmajor())
        };
        let plus = shifted(h)?;
        let minus = shifted(-h)?;
        let fd: Vec<f64> = plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        let jv = j.matvec(&v)?;
        let num: f64 = jv.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let den: f64 = fd.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-300);
        worst = worst.max(num / den);
    }
    Ok(worst)
}

/// Copy of `model` with the given flat parameters.
pub fn with_params(model: &RevMlp, theta: &[f64]) -> Result<RevMlp> {
    let pairs = unflatten_params(model, theta)?;
    let mut m = model.clone();
    for ((w1, w2), p) in m.trainable_mut().into_iter().zip(pairs) {
        *w1 = p.w1;
        *w2 = p.w2;
    }
    Ok(m)
}

fn mask(model: &RevMlp, a: &Mat) -> Result<Mat> {
    let ones = Mat::from_fn(a.rows(), a.cols(), |_, _| 1.0);
    Ok(model.activation().grad_mul(a, &ones)?)
}

/// Per-sample `h × h` matrix `W² diag(σ′(a2_j)) Vb` for block `b`.
fn b_factor(model: &RevMlp, cache: &ActivationCache, b: usize, j: usize) -> Result<Mat> {
    let blk = &model.blocks()[b];
    let m2 = mask(model, &cache.blocks()[b].a2)?;
    let dvb = Mat::from_fn(model.d_prime(), model.half(), |k, i| m2[(k, j)] * blk.vb()[(k, i)]);
    Ok(blk.w2().matmul(&dvb)?)
}

/// Dense `∂vec(x_b)/∂vec(x_{b−1})` for block `b`, built sample by sample
/// from the coupling equations.
fn block_state_jacobian(model: &RevMlp, cache: &ActivationCache, b: usize) -> Result<Mat> {
    let (d, h) = (model.d(), model.half());
    let n = cache.batch_size();
    let blk = &model.blocks()[b];
    let m1 = mask(model, &cache.blocks()[b].a1)?;
    let mut t = Mat::zeros(d * n, d * n);
    for j in 0..n {
        let dva = Mat::from_fn(model.d_prime(), h, |k, i| m1[(k, j)] * blk.va()[(k, i)]);
        let p = blk.w1().matmul(&dva)?; // ∂x¹/∂x²_in
        let q = b_factor(model, cache, b, j)?; // ∂x²/∂x¹_out
        let qp = q.matmul(&p)?;
        let o = d * j;
        for r in 0..h {
            t[(o + r, o + r)] = 1.0;
            t[(o + h + r, o + h + r)] = 1.0;
            for c in 0..h {
                t[(o + r, o + h + c)] = p[(r, c)];
                t[(o + h + r, o + c)] = q[(r, c)];
                t[(o + h + r, o + h + c)] += qp[(r, c)];
            }
        }
    }
    Ok(t)
}

/// Dense `∂vec(x_L)/∂vec(x_b)` for every block output `b`.
fn output_state_jacobians(model: &RevMlp, cache: &ActivationCache) -> Result<Vec<Mat>> {
    let dn = model.d() * cache.batch_size();
    let depth = model.depth();
    let mut out = vec![Mat::identity(dn); depth];
    for b in (0..depth - 1).rev() {
        out[b] = out[b + 1].matmul(&block_state_jacobian(model, cache, b + 1)?)?;
    }
    Ok(out)
}

/// Dense pieces of the local Jacobian `∂x_b/∂w_b`.
struct LocalJacobian {
    /// `∂vec(x¹_b)/∂vec(W¹_b) = s1ᵀ ⊗ I` (`hn × hd′`).
    a: Mat,
    /// `∂vec(x²_b)/∂vec(W¹_b)` (`hn × hd′`).
    b: Mat,
    /// `∂vec(x²_b)/∂vec(W²_b) = s2ᵀ ⊗ I`.
    c: Mat,
}

fn local_jacobian(model: &RevMlp, cache: &ActivationCache, b: usize) -> Result<LocalJacobian> {
    let (h, dp) = (model.half(), model.d_prime());
    let n = cache.batch_size();
    let c = &cache.blocks()[b];
    let eye = Mat::identity(h);
    let a = kron(&c.s1.transpose(), &eye);
    let cc = kron(&c.s2.transpose(), &eye);
    let mut bm = Mat::zeros(h * n, h * dp);
    for j in 0..n {
        let q = b_factor(model, cache, b, j)?;
        for r in 0..h {
            for i in 0..h {
                for k in 0..dp {
                    bm[(r + h * j, i + h * k)] = q[(r, i)] * c.s1[(k, j)];
                }
            }
        }
    }
    Ok(LocalJacobian { a, b: bm, c: cc })
}

/// Selection matrices taking `vec(x)` to `vec(x¹)` and `vec(x²)`.
fn half_selectors(h: usize, n: usize) -> (Mat, Mat) {
    let d = 2 * h;
    let mut s1 = Mat::zeros(h * n, d * n);
    let mut s2 = Mat::zeros(h * n, d * n);
    for j in 0..n {
        for i in 0..h {
            s1[(i + h * j, i + d * j)] = 1.0;
            s2[(i + h * j, h + i + d * j)] = 1.0;
        }
    }
    (s1, s2)
}

fn full_rank_pinv(s: &Mat, block: usize, half: u8) -> Result<Mat> {
    let p = pseudoinverse(s, PinvPolicy::EXACT)?;
    let smax = p.singular_values[0];
    let smin = *p.singular_values.last().expect("non-empty");
    let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
    if s.cols() > s.rows() || ratio <= 1e-8 {
        return Err(OracleError::RankDeficient { block, half, ratio });
    }
    Ok(p.matrix)
}

/// Per-block dense quantities shared by several checks.
struct BlockDense {
    /// `J_b` (`dn × 2hd′`).
    j: Mat,
    /// Explicit block-triangular right inverse of `J_b` (no `1/L`).
    right_inv: Mat,
    local: LocalJacobian,
}

fn block_dense(model: &RevMlp, x: &Mat) -> Result<Vec<BlockDense>> {
    let n = x.cols();
    guard(model, n)?;
    let h = model.half();
    let (_, cache) = model.forward(x)?;
    let outs = output_state_jacobians(model, &cache)?;
    let (sel1, sel2) = half_selectors(h, n);
    let mut res = Vec::with_capacity(model.depth());
    for (b, dxl_dxb) in outs.into_iter().enumerate() {
        let local = local_jacobian(model, &cache, b)?;
        let c = &cache.blocks()[b];
        let p1 = full_rank_pinv(&c.s1, b, 1)?;
        let p2 = full_rank_pinv(&c.s2, b, 2)?;
        let eye = Mat::identity(h);
        let a_inv = kron(&p1.transpose(), &eye);
        let c_inv = kron(&p2.transpose(), &eye);
        // local Jacobian [A 0; B C] in vec(x) coordinates
        let k_w1 = sel1.t_matmul(&local.a)?.add(&sel2.t_matmul(&local.b)?)?;
        let k_w2 = sel2.t_matmul(&local.c)?;
        let k = hstack(&k_w1, &k_w2);
        let j = dxl_dxb.matmul(&k)?;
        // [A⊣ 0; −C⊣ B A⊣  C⊣] applied after the exact inverse of ∂x_L/∂x_b
        let r1 = a_inv.matmul(&sel1)?;
        let r2 = c_inv.matmul(&sel2.sub(&local.b.matmul(&r1)?)?)?;
        let k_inv = Mat::vstack(&r1, &r2)?;
        let right_inv = k_inv.matmul(&inverse(&dxl_dxb)?)?;
        res.push(BlockDense { j, right_inv, local });
    }
    Ok(res)
}

fn hstack(a: &Mat, b: &Mat) -> Mat {
    Mat::from_fn(a.rows(), a.cols() + b.cols(), |i, j| if j < a.cols() { a[(i, j)] } else { b[(i, j - a.cols())] })
}

/// `J` assembled from the per-block products `(∂x_L/∂x_b)(∂x_b/∂w_b)`;
/// independent of the reverse-mode code path.
pub fn dense_jacobian_blockwise(model: &RevMlp, x: &Mat) -> Result<Mat> {
    let blocks = block_dense(model, x)?;
    let mut j = blocks[0].j.clone();
    for b in &blocks[1..] {
        j = hstack(&j, &b.j);
    }
    Ok(j)
}

/// `J⊣ = (1/L) · stack(J_b⊣)` (`p × n·d`), assembled explicitly.
pub fn dense_right_inverse(model: &RevMlp, x: &Mat) -> Result<Mat> {
    let blocks = block_dense(model, x)?;
    let inv_depth = 1.0 / model.depth() as f64;
    let mut r = blocks[0].right_inv.clone();
    for b in &blocks[1..] {
        r = Mat::vstack(&r, &b.right_inv)?;
    }
    Ok(r.scale(inv_depth))
}

/// `vec(J⊣ ε)` through the layer-wise code path (untruncated pseudoinverse).
pub fn layerwise_right_inverse_vec(model: &RevMlp, cache: &ActivationCache, eps: &[f64]) -> Result<Vec<f64>> {
    let e = Mat::from_colmajor(model.d(), cache.batch_size(), eps)?;
    let (deltas, _) = right_inverse_apply(model, cache, &e, PinvPolicy::EXACT)?;
    Ok(flatten_params(&deltas))
}

fn rel_frobenius(a: &Mat, b: &Mat) -> Result<f64> {
    Ok(a.sub(b)?.frobenius_norm() / b.frobenius_norm().max(1e-300))
}

/// `J J⊣ v = v` for random `v`, with `J` from reverse mode and `J⊣` from the
/// layer-wise code path; also compares the layer-wise and dense `J⊣`.
pub fn check_right_inverse(model: &RevMlp, x: &Mat, vectors: usize, seed: u64) -> Result<OracleReport> {
    let n = x.cols();
    let mut rep = OracleReport::new("right_inverse", model, n);
    rep.param("vectors", vectors);
    let jac = dense_jacobian(model, x)?;
    let (_, cache) = model.forward(x)?;
    let dense_inv = dense_right_inverse(model, x)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut worst_dense: f64 = 0.0;
    for _ in 0..vectors {
        let v: Vec<f64> = (0..model.d() * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let jinv_v = layerwise_right_inverse_vec(model, &cache, &v)?;
        let back = jac.j.matvec(&jinv_v)?;
        let err = back.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        worst = worst.max(err / norm);
        let dense_v = dense_inv.matvec(&v)?;
        let diff = dense_v.iter().zip(&jinv_v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = dense_v.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-300);
        worst_dense = worst_dense.max(diff / scale);
    }
    rep.bound("max_rel_JJinv_v_minus_v", worst, 1e-7);
    rep.bound("max_rel_layerwise_vs_dense_Jinv", worst_dense, 1e-7);
    rep.bound("jacobian_fd_rel_error", jac.fd_rel_error, 1e-5);
    Ok(rep)
}

/// Per-block comparison of the layer-wise right inverse with the SVD
/// pseudoinverse, plus the identity `B = B A⁺ A`.
pub fn check_layerwise_mpp(model: &RevMlp, x: &Mat) -> Result<OracleReport> {
    let mut rep = OracleReport::new("layerwise_mpp", model, x.cols());
    let blocks = block_dense(model, x)?;
    let mut worst_rel: f64 = 0.0;
    let mut worst_b: f64 = 0.0;
    for bd in &blocks {
        let jp = pseudoinverse(&bd.j, PinvPolicy::Truncate { rtol: 1e-12, atol: 0.0 })?.matrix;
        worst_rel = worst_rel.max(rel_frobenius(&bd.right_inv, &jp)?);
        let a = &bd.local.a;
        let a_pinv = pseudoinverse(a, PinvPolicy::Truncate { rtol: 1e-12, atol: 0.0 })?.matrix;
        let bab = bd.local.b.matmul(&a_pinv)?.matmul(a)?;
        worst_b = worst_b.max(bab.sub(&bd.local.b)?.max_abs());
    }
    rep.bound("max_rel_Jinv_minus_pinv", worst_rel, 1e-6);
    rep.bound("max_abs_B_minus_BApA", worst_b, 1e-8);
    Ok(rep)
}

/// `A = H J (Jᵀ H J)⁺ Jᵀ` is a projection: idempotent with eigenvalues in
/// `{0, 1}`.
pub fn check_projection(model: &RevMlp, x: &Mat, h: &Mat) -> Result<OracleReport> {
    let n = x.cols();
    let mut rep = OracleReport::new("projection", model, n);
    let dn = model.d() * n;
    if h.shape() != (dn, dn) {
        return Err(OracleError::Precondition(format!("H of shape {dn}×{dn}")));
    }
    let (hvals, hvecs) = sym_eigen(h).map_err(|_| OracleError::NotSpd)?;
    if hvals.last().is_some_and(|&v| v <= 0.0) {
        return Err(OracleError::NotSpd);
    }
    let j = dense_jacobian(model, x)?.j;
    let p = j.cols();
    rep.param("p", p);
    rep.param("overparameterized", p >= dn);
    let hj = h.matmul(&j)?;
    let g = j.t_matmul(&hj)?;
    let gp = pseudoinverse(&g, PinvPolicy::Truncate { rtol: 1e-10, atol: 0.0 })?.matrix;
    let a = hj.matmul(&gp)?.matmul_t(&j)?;
    let idem = a.matmul(&a)?.sub(&a)?.frobenius_norm() / a.frobenius_norm().max(1e-300);
    rep.bound("idempotency_rel", idem, 1e-6);

    // H^{1/2} J G⁺ Jᵀ H^{1/2} is symmetric and similar to A.
    let sqrt_vals: Vec<f64> = hvals.iter().map(|v| v.sqrt()).collect();
    let hs = hvecs.matmul(&Mat::diag(&sqrt_vals))?.matmul_t(&hvecs)?;
    let hsj = hs.matmul(&j)?;
    let sym = hsj.matmul(&gp)?.matmul_t(&hsj)?;
    let sym = sym.add(&sym.transpose())?.scale(0.5);
    let (vals, _) = sym_eigen(&sym)?;
    let dist = vals.iter().map(|&v| v.abs().min((v - 1.0).abs())).fold(0.0, f64::max);
    rep.bound("eigen_distance_from_0_1", dist, 1e-6);
    let rank_a = vals.iter().filter(|&&v| v > 0.5).count();
    let jf = crate::linalg::svd(&j)?;
    let rank_j = jf.rank_above(1e-10 * jf.s[0]);
    rep.note("rank_A", rank_a as f64);
    rep.note("rank_J", rank_j as f64);
    if rank_a != rank_j {
        rep.pass = false;
    }
    if p >= dn && rank_j == dn {
        rep.bound("max_abs_A_minus_I", a.sub(&Mat::identity(dn))?.max_abs(), 1e-6);
    }
    Ok(rep)
}

/// One GGN step `(JᵀHJ)⁺ Jᵀ H r` against the function-space form `J⁺ r`
/// for the quadratic loss `½ rᵀ H r`, `r = vec(f − y)`. For one-block models
/// with `H = I` the step is also compared with `gn_step` at `α = 1`.
pub fn check_newton_function_space(model: &RevMlp, x: &Mat, y: &Mat, h: &Mat) -> Result<OracleReport> {
    let n = x.cols();
    let mut rep = OracleReport::new("newton_function_space", model, n);
    let dn = model.d() * n;
    if model.d_y() != model.d() || y.shape() != (model.d(), n) {
        return Err(OracleError::Precondition("a full-width regression target (d_y = d)".into()));
    }
    if h.shape() != (dn, dn) || !h.is_symmetric(1e-12) {
        return Err(OracleError::NotSpd);
    }
    let j = dense_jacobian(model, x)?.j;
    if j.cols() < dn {
        return Err(OracleError::Precondition("an overparameterized instance (p ≥ n·d)".into()));
    }
    let f = model.predict(x)?;
    let r = f.sub(y)?.vec_colmajor();
    let grad_f = h.matvec(&r)?;
    let grad_theta = j.transpose().matvec(&grad_f)?;
    let policy = PinvPolicy::Truncate { rtol: 1e-10, atol: 0.0 };
    let ggn = pseudoinverse(&j.t_matmul(&h.matmul(&j)?)?, policy)?.matrix;
    let step_theta = ggn.matvec(&grad_theta)?;
    let jp = pseudoinverse(&j, policy)?.matrix;
    let h_inv_grad = inverse(h)?.matvec(&grad_f)?;
    let step_f = jp.matvec(&h_inv_grad)?;
    let rel = |a: &[f64], b: &[f64]| {
        let num = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let den = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if den == 0.0 {
            num
        } else {
            num / den
        }
    };
    rep.bound("rel_ggn_vs_function_space", rel(&step_theta, &step_f), 1e-7);

    let is_identity = h.sub(&Mat::identity(dn))?.max_abs() == 0.0;
    if is_identity && model.depth() == 1 {
        let mut m = model.clone();
        let target = crate::losses::TargetBatch::Regression(y.clone());
        let cfg = crate::optim::GnConfig { lr: 1.0, pinv: PinvPolicy::EXACT, weight_decay: 0.0 };
        crate::optim::gn_step(&mut m, x, &target, crate::losses::LossKind::SquareLoss, &cfg)?;
        let before = flatten_params(&model.weights());
        let after = flatten_params(&m.weights());
        let gn: Vec<f64> = before.iter().zip(&after).map(|(a, b)| a - b).collect();
        rep.bound("rel_gn_step_vs_pinv", rel(&gn, &step_f), 1e-7);
    }
    Ok(rep)
}

/// Compares the layer-wise GN update against `θ − α J⊣ ε` with `J⊣`
/// assembled densely. `deltas` computes the layer-wise `J⊣ ε`; passing
/// anything but [`right_inverse_apply`] is only useful for mutation tests.
pub fn check_gn_step_dense<F>(model: &RevMlp, x: &Mat, y: &Mat, alpha: f64, deltas: F) -> Result<OracleReport>
where
    F: Fn(&RevMlp, &ActivationCache, &Mat) -> std::result::Result<Vec<WeightPair>, OptimError>,
{
    let n = x.cols();
    let mut rep = OracleReport::new("gn_step_dense", model, n);
    rep.param("alpha", alpha);
    let (out, cache) = model.forward(x)?;
    let f = crate::revnet::logits(&out, model.d_y());
    let target = crate::losses::TargetBatch::Regression(y.clone());
    let eps = crate::losses::functional_gradient(crate::losses::LossKind::SquareLoss, &f, &target, model.d())
        .map_err(OptimError::from)?
        .scale(n as f64);
    let mut layer = model.clone();
    layer.apply_delta(&deltas(model, &cache, &eps)?, -alpha)?;
    let theta = flatten_params(&model.weights());
    let step = dense_right_inverse(model, x)?.matvec(&eps.vec_colmajor())?;
    let dense: Vec<f64> = theta.iter().zip(&step).map(|(t, s)| t - alpha * s).collect();
    let got = flatten_params(&layer.weights());
    let diff = got.iter().zip(&dense).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    rep.bound("max_abs_layerwise_vs_dense", diff, 1e-8);
    Ok(rep)
}

/// Layer-wise right inverse as used by `gn_step`, for [`check_gn_step_dense`].
pub fn layerwise_deltas(
    model: &RevMlp,
    cache: &ActivationCache,
    eps: &Mat,
) -> std::result::Result<Vec<WeightPair>, OptimError> {
    Ok(right_inverse_apply(model, cache, eps, PinvPolicy::EXACT)?.0)
}

/// Square-loss residual norm `‖f − y‖_F` over a trajectory.
fn residual(model: &RevMlp, x: &Mat, y: &Mat) -> Result<f64> {
    Ok(model.predict(x)?.sub(y)?.frobenius_norm())
}

/// Which right inverse drives a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RightInverse {
    /// Layer-wise construction.
    Layerwise,
    /// SVD pseudoinverse of the dense Jacobian.
    DensePinv,
}

/// Residual norms `‖ε_k‖`, `k = 0..=steps`, of full-batch square-loss GN.
pub fn trajectory(model: &RevMlp, x: &Mat, y: &Mat, alpha: f64, steps: usize, kind: RightInverse) -> Result<Vec<f64>> {
    let mut m = model.clone();
    let mut out = vec![residual(&m, x, y)?];
    for k in 0..steps {
        let (f, cache) = m.forward(x)?;
        let r = f.sub(y)?;
        let delta = match kind {
            RightInverse::Layerwise => right_inverse_apply(&m, &cache, &r, PinvPolicy::EXACT)?.0,
            RightInverse::DensePinv => {
                let j = dense_jacobian(&m, x)?.j;
                let jp = pseudoinverse(&j, PinvPolicy::Truncate { rtol: 1e-12, atol: 0.0 })?.matrix;
                unflatten_params(&m, &jp.matvec(&r.vec_colmajor())?)?
            }
        };
        m.apply_delta(&delta, -alpha)?;
        let e = residual(&m, x, y)?;
        if !e.is_finite() || e > 1e6 * out[0] {
            return Err(OracleError::Diverged { alpha, step: k + 1 });
        }
        out.push(e);
    }
    Ok(out)
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}

/// Trajectories driven by the layer-wise right inverse and by the dense
/// pseudoinverse stay within `O(α)` of each other.
pub fn check_right_inverse_equivalence(
    model: &RevMlp,
    x: &Mat,
    y: &Mat,
    alphas: &[f64],
    steps: usize,
) -> Result<OracleReport> {
    let mut rep = OracleReport::new("right_inverse_equivalence", model, x.cols());
    rep.param("alphas", alphas.to_vec());
    rep.param("steps", steps);
    let mut gaps = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let a = trajectory(model, x, y, alpha, steps, RightInverse::Layerwise)?;
        let b = trajectory(model, x, y, alpha, steps, RightInverse::DensePinv)?;
        let gap = a.iter().zip(&b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max) / a[0];
        rep.note(&format!("gap_rel_alpha_{alpha}"), gap);
        gaps.push(gap);
        let contraction = a
            .iter()
            .enumerate()
            .map(|(k, e)| (e / (a[0] * (1.0 - alpha).powi(k as i32)) - 1.0).abs())
            .fold(0.0, f64::max);
        rep.bound(&format!("contraction_dev_alpha_{alpha}"), contraction, 0.05);
    }
    let slope = log_log_slope(alphas, &gaps);
    rep.residuals.insert("gap_slope".into(), slope);
    if !(slope >= 0.7) {
        rep.pass = false;
    }
    Ok(rep)
}

#[cfg(test)]
mod tests;
