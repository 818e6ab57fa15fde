//! Parameter updates: layer-wise Gauss-Newton, SGD and Adam.

mod gn;

pub use gn::{gn_step, right_inverse_apply, GnBlockReport, GnConfig, GnReport};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{LinalgError, Mat};
use crate::losses::LossError;
use crate::revnet::{ActivationCache, RevMlp, RevnetError, WeightPair};

#[derive(Debug, Error)]
pub enum OptimError {
    #[error(transparent)]
    Revnet(#[from] RevnetError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("pseudoinverse of block {block} half {half} kept no singular values (largest {largest:e})")]
    Degenerate { block: usize, half: u8, largest: f64 },
    #[error("batch size {n} exceeds bottleneck width {d_prime}; the activation matrices cannot have independent columns")]
    Precondition { n: usize, d_prime: usize },
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),
    #[error("switch schedule thresholds must start at 0 and increase strictly")]
    Schedule,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub lr: f64,
    #[serde(default)]
    pub weight_decay: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
    #[serde(default)]
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn new(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps_hat: 1e-8, weight_decay: 0.0 }
    }

    fn validate(&self) -> Result<(), OptimError> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps_hat > 0.0
            && self.weight_decay >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(OptimError::InvalidConfig(format!("{self:?}")))
        }
    }
}

impl SgdConfig {
    fn validate(&self) -> Result<(), OptimError> {
        if self.lr > 0.0 && self.weight_decay >= 0.0 {
            Ok(())
        } else {
            Err(OptimError::InvalidConfig(format!("{self:?}")))
        }
    }
}

/// Optimizer state carried between steps. Only Adam uses the moments.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OptState {
    pub step: u64,
    pub m: Vec<WeightPair>,
    pub v: Vec<WeightPair>,
}

impl OptState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// `W ← W − rate · W` for every trainable matrix.
fn decay(model: &mut RevMlp, rate: f64) {
    for (w1, w2) in model.trainable_mut() {
        w1.scale_in_place(1.0 - rate);
        w2.scale_in_place(1.0 - rate);
    }
}

/// Gradient step on `Jᵀ ε` with coupled weight decay.
pub fn sgd_step(model: &mut RevMlp, cache: &ActivationCache, eps: &Mat, cfg: &SgdConfig) -> Result<(), OptimError> {
    cfg.validate()?;
    let grads = model.vjp(cache, eps)?;
    let wd = cfg.weight_decay;
    for ((w1, w2), g) in model.trainable_mut().into_iter().zip(&grads) {
        if wd > 0.0 {
            let d1 = g.w1.add(&w1.scale(wd))?;
            let d2 = g.w2.add(&w2.scale(wd))?;
            w1.axpy(-cfg.lr, &d1)?;
            w2.axpy(-cfg.lr, &d2)?;
        } else {
            w1.axpy(-cfg.lr, &g.w1)?;
            w2.axpy(-cfg.lr, &g.w2)?;
        }
    }
    Ok(())
}

fn adam_update(w: &mut Mat, g: &Mat, m: &mut Mat, v: &mut Mat, cfg: &AdamConfig, c1: f64, c2: f64) {
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let ws = w.as_mut_slice();
    let ms = m.as_mut_slice();
    let vs = v.as_mut_slice();
    for (((w, &g), m), v) in ws.iter_mut().zip(g.as_slice()).zip(ms.iter_mut()).zip(vs.iter_mut()) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let mhat = *m / c1;
        let vhat = *v / c2;
        *w -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps_hat);
    }
}

/// Bias-corrected Adam on `Jᵀ ε`, then decoupled weight decay.
pub fn adam_step(
    model: &mut RevMlp,
    cache: &ActivationCache,
    eps: &Mat,
    cfg: &AdamConfig,
    state: &mut OptState,
) -> Result<(), OptimError> {
    cfg.validate()?;
    let grads = model.vjp(cache, eps)?;
    if state.m.len() != grads.len() {
        state.m = model.blocks().iter().map(WeightPair::zeros_like).collect();
        state.v = state.m.clone();
        state.step = 0;
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for ((((w1, w2), g), m), v) in model.trainable_mut().into_iter().zip(&grads).zip(&mut state.m).zip(&mut state.v) {
        adam_update(w1, &g.w1, &mut m.w1, &mut v.w1, cfg, c1, c2);
        adam_update(w2, &g.w2, &mut m.w2, &mut v.w2, cfg, c1, c2);
    }
    if cfg.weight_decay > 0.0 {
        decay(model, cfg.lr * cfg.weight_decay);
    }
    for pair in state.m.iter().chain(&state.v) {
        pair.w1.check_finite("adam moments")?;
        pair.w2.check_finite("adam moments")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Gn,
    Sgd,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = OptimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gn" => Ok(OptimizerKind::Gn),
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(OptimError::InvalidConfig(format!("unknown optimizer {other:?}"))),
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OptimizerKind::Gn => "gn",
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

/// Optimizer active at `epoch` under a list of `(first_epoch, optimizer)`
/// stages. The first stage must start at epoch 0.
pub fn switch_schedule(epoch: u64, stages: &[(u64, OptimizerKind)]) -> Result<OptimizerKind, OptimError> {
    let ordered = stages.windows(2).all(|w| w[0].0 < w[1].0);
    match stages.first() {
        Some(&(0, _)) if ordered => {}
        _ => return Err(OptimError::Schedule),
    }
    Ok(stages.iter().rev().find(|(start, _)| *start <= epoch).expect("stage 0 always matches").1)
}

#[cfg(test)]
mod tests;
