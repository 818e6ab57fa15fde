//! Training diagnostics: NTK evolution, linear CKA between block
//! representations, weight cosine to initialization and per-batch loss
//! change.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::{frobenius_cosine, sym_eigen, LinalgError, Mat};
use crate::revnet::{RevMlp, RevnetError};

/// Largest `m · d_y` for which [`ntk`] assembles the kernel.
pub const MAX_NTK_ROWS: usize = 2048;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Revnet(#[from] RevnetError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("NTK with {rows} rows exceeds the limit of {MAX_NTK_ROWS}")]
    TooLarge { rows: usize },
    #[error("{0}")]
    Shape(String),
    #[error("representation has zero variance across samples")]
    ZeroVariance,
    #[error("loss before the update must be positive, got {0}")]
    NonPositiveLoss(f64),
    #[error("models have different architectures")]
    Architecture,
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

/// Fixed samples on which kernels and representations are measured.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSet {
    pub x: Mat,
    /// Output rows the NTK is restricted to.
    pub d_y: usize,
    pub seed: u64,
}

impl ProbeSet {
    /// `m` distinct columns of `x`, chosen by `seed`, in ascending order.
    pub fn sample(x: &Mat, m: usize, d_y: usize, seed: u64) -> Result<Self> {
        if m == 0 || m > x.cols() {
            return Err(AnalysisError::Shape(format!("probe size {m} out of range for {} samples", x.cols())));
        }
        if d_y == 0 || d_y > x.rows() {
            return Err(AnalysisError::Shape(format!("d_y = {d_y} out of range for width {}", x.rows())));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = rand::seq::index::sample(&mut rng, x.cols(), m).into_vec();
        idx.sort_unstable();
        Ok(Self { x: x.select_cols(&idx), d_y, seed })
    }

    pub fn len(&self) -> usize {
        self.x.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.x.cols() == 0
    }
}

/// Empirical NTK on a probe set. Row/column `k · d_y + c` is output class `c`
/// of probe sample `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct NtkMatrix {
    pub theta: Mat,
}

impl NtkMatrix {
    /// `(max |Θ − Θᵀ|, smallest eigenvalue / trace)`.
    pub fn symmetry_and_psd(&self) -> Result<(f64, f64)> {
        let t = &self.theta;
        let asym = t.sub(&t.transpose())?.max_abs();
        let sym = t.add(&t.transpose())?.scale(0.5);
        let (eig, _) = sym_eigen(&sym)?;
        let trace: f64 = (0..t.rows()).map(|i| t[(i, i)]).sum();
        let min = eig.last().copied().unwrap_or(0.0);
        Ok((asym, if trace > 0.0 { min / trace } else { min }))
    }
}

/// `Θ = J Jᵀ` over trainable parameters, `J` the Jacobian of the first `d_y`
/// output rows on the probe set.
///
/// Samples do not interact in the forward pass, so one VJP with the unit
/// cotangent `e_c` in every column yields the rows for class `c` of all
/// samples at once. With branch cotangents `C` and activations `s`, the
/// gradient for row `(k, c)` is `C_c[:, k] s[:, k]ᵀ` per trainable matrix, so
///
/// `Θ[(k,c), (k',c')] = Σ (C_c[:, k] · C_c'[:, k']) (s[:, k] · s[:, k'])`
///
/// summed over blocks and halves.
pub fn ntk(model: &RevMlp, probe: &ProbeSet) -> Result<NtkMatrix> {
    let m = probe.len();
    let dy = probe.d_y;
    let rows = m * dy;
    if rows > MAX_NTK_ROWS {
        return Err(AnalysisError::TooLarge { rows });
    }
    if dy > model.d() {
        return Err(AnalysisError::Shape(format!("d_y = {dy} exceeds model width {}", model.d())));
    }
    let (_, cache) = model.forward(&probe.x)?;
    let mut per_class = Vec::with_capacity(dy);
    for c in 0..dy {
        let u = Mat::from_fn(model.d(), m, |i, _| if i == c { 1.0 } else { 0.0 });
        per_class.push(model.vjp_full(&cache, &u)?.branch_cotangents);
    }
    let mut theta = Mat::zeros(rows, rows);
    for (b, bc) in cache.blocks().iter().enumerate() {
        for half in 0..2 {
            let s = if half == 0 { &bc.s1 } else { &bc.s2 };
            let gram_s = s.t_matmul(s)?;
            let branch = |c: usize| {
                let (c1, c2) = &per_class[c][b];
                if half == 0 {
                    c1
                } else {
                    c2
                }
            };
            for c in 0..dy {
                for c2 in c..dy {
                    let g = branch(c).t_matmul(branch(c2))?;
                    for k in 0..m {
                        for k2 in 0..m {
                            let v = g[(k, k2)] * gram_s[(k, k2)];
                            theta[(k * dy + c, k2 * dy + c2)] += v;
                            if c2 != c {
                                theta[(k2 * dy + c2, k * dy + c)] += v;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(NtkMatrix { theta })
}

fn same_shape(a: &Mat, b: &Mat) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(AnalysisError::Shape(format!("kernel shapes differ: {:?} vs {:?}", a.shape(), b.shape())))
    }
}

/// Frobenius cosine between the current and initial kernels.
pub fn ntk_similarity(theta_t: &NtkMatrix, theta_0: &NtkMatrix) -> Result<f64> {
    same_shape(&theta_t.theta, &theta_0.theta)?;
    Ok(frobenius_cosine(&theta_t.theta, &theta_0.theta)?)
}

/// `‖Θ_t − Θ_prev‖_F / ‖Θ_prev‖_F`.
pub fn ntk_rate_of_change(theta_t: &NtkMatrix, theta_prev: &NtkMatrix) -> Result<f64> {
    same_shape(&theta_t.theta, &theta_prev.theta)?;
    let denom = theta_prev.theta.frobenius_norm();
    if denom == 0.0 {
        return Err(LinalgError::ZeroNorm("previous kernel").into());
    }
    Ok(theta_t.theta.sub(&theta_prev.theta)?.frobenius_norm() / denom)
}

fn center_rows(x: &Mat) -> Mat {
    let m = x.cols() as f64;
    let mut out = x.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let mean = row.iter().sum::<f64>() / m;
        row.iter_mut().for_each(|v| *v -= mean);
    }
    out
}

/// Linear CKA between two representations of the same `m` samples (features
/// as rows), in the feature-space form
/// `‖Y_c X_cᵀ‖² / (‖X_c X_cᵀ‖ ‖Y_c Y_cᵀ‖)`.
pub fn linear_cka(x_rep: &Mat, y_rep: &Mat) -> Result<f64> {
    if x_rep.cols() != y_rep.cols() || x_rep.cols() < 2 {
        return Err(AnalysisError::Shape(format!(
            "CKA needs the same sample count ≥ 2, got {} and {}",
            x_rep.cols(),
            y_rep.cols()
        )));
    }
    let xc = center_rows(x_rep);
    let yc = center_rows(y_rep);
    let xx = xc.matmul_t(&xc)?.frobenius_norm();
    let yy = yc.matmul_t(&yc)?.frobenius_norm();
    if xx == 0.0 || yy == 0.0 {
        return Err(AnalysisError::ZeroVariance);
    }
    let xy = yc.matmul_t(&xc)?.frobenius_norm();
    Ok((xy * xy / (xx * yy)).clamp(0.0, 1.0))
}

/// Activation after `layer` blocks on the probe set; `layer = 0` is the
/// input and `layer = L` the network output.
pub fn block_representations(model: &RevMlp, probe: &ProbeSet, layer: usize) -> Result<Mat> {
    if layer > model.depth() {
        return Err(RevnetError::BlockIndex { index: layer, depth: model.depth() }.into());
    }
    let (_, cache) = model.forward(&probe.x)?;
    Ok(if layer == 0 { cache.input().clone() } else { cache.block_output(layer - 1) })
}

/// Cosine between each trainable matrix and its counterpart in `model_0`,
/// blocks in order, `W¹` before `W²`.
pub fn weight_cosine(model_t: &RevMlp, model_0: &RevMlp) -> Result<Vec<f64>> {
    if model_t.d() != model_0.d() || model_t.d_prime() != model_0.d_prime() || model_t.depth() != model_0.depth() {
        return Err(AnalysisError::Architecture);
    }
    let mut out = Vec::with_capacity(2 * model_t.depth());
    for (a, b) in model_t.blocks().iter().zip(model_0.blocks()) {
        out.push(frobenius_cosine(a.w1(), b.w1())?);
        out.push(frobenius_cosine(a.w2(), b.w2())?);
    }
    Ok(out)
}

/// Percentage change of the loss on one mini-batch across the update
/// computed on it.
pub fn minibatch_loss_change(loss_before: f64, loss_after: f64) -> Result<f64> {
    if !(loss_before > 0.0) {
        return Err(AnalysisError::NonPositiveLoss(loss_before));
    }
    Ok(100.0 * (loss_after - loss_before) / loss_before)
}
