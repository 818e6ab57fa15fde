//! Layer-wise exact Gauss-Newton.
//!
//! For block `b` the Jacobian of the network output with respect to
//! `(W¹_b, W²_b)` factors as `(∂x_L/∂x_b) · (∂x_b/∂w_b)`. The first factor is
//! inverted exactly by differentiating the inverse network, and the second is
//! block lower-triangular:
//!
//! ```text
//! ∂x_b/∂w_b = [ s1ᵀ ⊗ I      0     ]
//!             [   B      s2ᵀ ⊗ I   ]
//! ```
//!
//! so a right inverse only needs pseudoinverses of the `d′ × n` matrices
//! `s1`, `s2`. Stacking the per-block right inverses with weight `1/L` gives
//! a right inverse of the full Jacobian.

use log::warn;
use serde::{Deserialize, Serialize};

use super::OptimError;
use crate::linalg::{pseudoinverse, Mat, PinvPolicy};
use crate::losses::{functional_gradient, loss_value, LossKind, TargetBatch};
use crate::revnet::{logits, ActivationCache, RevMlp, WeightPair};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GnConfig {
    pub lr: f64,
    #[serde(default)]
    pub pinv: PinvPolicy,
    /// Decoupled: `W ← W − lr · weight_decay · W` after the GN update.
    #[serde(default)]
    pub weight_decay: f64,
}

impl GnConfig {
    pub fn new(lr: f64) -> Self {
        Self { lr, pinv: PinvPolicy::default(), weight_decay: 0.0 }
    }

    pub fn validate(&self) -> Result<(), OptimError> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(OptimError::InvalidConfig(format!("gn lr must be positive, got {}", self.lr)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(OptimError::InvalidConfig("gn weight_decay must be non-negative".into()));
        }
        self.pinv.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnBlockReport {
    pub rank1: usize,
    pub rank2: usize,
    /// Frobenius norms of the per-block directions before the `α/L` scaling.
    pub delta1_norm: f64,
    pub delta2_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnReport {
    pub loss_before: f64,
    /// Norm of the summed-loss functional gradient the step inverted.
    pub eps_norm: f64,
    pub blocks: Vec<GnBlockReport>,
    /// The `n ≤ d′` requirement was skipped because the model has no
    /// bottleneck.
    pub precondition_waived: bool,
}

/// Per-call salt so the noise policy draws an independent stream for each
/// (step, block, half).
fn salt(step: u64, block: usize, half: usize) -> u64 {
    (step << 20) ^ ((block as u64) << 1) ^ half as u64
}

/// `J⊣ ε`, the layer-wise right inverse applied to `eps`, including the `1/L`
/// stacking weight. All blocks use the same cache.
pub fn right_inverse_apply(
    model: &RevMlp,
    cache: &ActivationCache,
    eps: &Mat,
    policy: PinvPolicy,
) -> Result<(Vec<WeightPair>, Vec<GnBlockReport>), OptimError> {
    let tangents = model.inverse_jvp_all(cache, eps)?;
    let inv_depth = 1.0 / model.depth() as f64;
    let mut deltas = Vec::with_capacity(model.depth());
    let mut reports = Vec::with_capacity(model.depth());
    for (b, ((g1, g2), c)) in tangents.into_iter().zip(cache.blocks()).enumerate() {
        let p1 = pseudoinverse(&c.s1, policy.reseeded(salt(model.step(), b, 1)))?;
        if p1.degenerate {
            return Err(OptimError::Degenerate { block: b, half: 1, largest: p1.singular_values[0] });
        }
        let delta1 = g1.matmul(&p1.matrix)?;
        let mut rhs2 = g2;
        rhs2.axpy(-1.0, &model.weight_jvp_x2(cache, b, &delta1)?)?;
        let p2 = pseudoinverse(&c.s2, policy.reseeded(salt(model.step(), b, 2)))?;
        if p2.degenerate {
            return Err(OptimError::Degenerate { block: b, half: 2, largest: p2.singular_values[0] });
        }
        let delta2 = rhs2.matmul(&p2.matrix)?;
        reports.push(GnBlockReport {
            rank1: p1.rank,
            rank2: p2.rank,
            delta1_norm: delta1.frobenius_norm(),
            delta2_norm: delta2.frobenius_norm(),
        });
        deltas.push(WeightPair { w1: delta1.scale(inv_depth), w2: delta2.scale(inv_depth) });
    }
    Ok((deltas, reports))
}

/// One Gauss-Newton step on the batch `(x, y)`: `θ ← θ − α J⊣ ε`.
///
/// `ε` here is the gradient of the summed (not averaged) loss, `n` times
/// [`functional_gradient`]. For square loss this is the residual `f − y`, so
/// a step contracts the residual by `1 − α` independently of batch size.
pub fn gn_step(
    model: &mut RevMlp,
    x: &Mat,
    y: &TargetBatch,
    kind: LossKind,
    cfg: &GnConfig,
) -> Result<GnReport, OptimError> {
    cfg.validate()?;
    let n = x.cols();
    let waived = n > model.d_prime() && model.no_bottleneck();
    if n > model.d_prime() && !model.no_bottleneck() {
        return Err(OptimError::Precondition { n, d_prime: model.d_prime() });
    }
    if waived {
        warn!("gn_step: batch size {n} exceeds width {}; no-bottleneck model, proceeding", model.d_prime());
    }
    let (out, cache) = model.forward(x)?;
    let f = logits(&out, model.d_y());
    let loss_before = loss_value(kind, &f, y)?;
    let eps = functional_gradient(kind, &f, y, model.d())?.scale(n as f64);
    let (deltas, blocks) = right_inverse_apply(model, &cache, &eps, cfg.pinv)?;
    model.apply_delta(&deltas, -cfg.lr)?;
    if cfg.weight_decay > 0.0 {
        super::decay(model, cfg.lr * cfg.weight_decay);
    }
    Ok(GnReport { loss_before, eps_norm: eps.frobenius_norm(), blocks, precondition_waived: waived })
}
