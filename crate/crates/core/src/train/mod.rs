//! Training loop shared by the CLI and the acceptance suite.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{augment_cifar, next_batch, BatchPlan, DataError, Dataset, CIFAR_DIM};
use crate::linalg::Mat;
use crate::losses::{accuracy, functional_gradient, loss_value, LossError, LossKind, TargetBatch};
use crate::optim::{
    adam_step, gn_step, sgd_step, switch_schedule, AdamConfig, GnConfig, OptState, OptimError, OptimizerKind, SgdConfig,
};
use crate::revnet::{logits, RevMlp, RevnetError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Revnet(#[from] RevnetError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("training diverged at step {step}: {what} is not finite")]
    Diverged { step: u64, what: &'static str },
    #[error("{0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// One step per epoch on the whole training set.
    FullBatch,
    MiniBatch(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSpec {
    /// `(first_epoch, optimizer)` stages; see [`switch_schedule`].
    pub schedule: Vec<(u64, OptimizerKind)>,
    pub gn: GnConfig,
    pub sgd: SgdConfig,
    pub adam: AdamConfig,
}

impl OptimizerSpec {
    pub fn gn(cfg: GnConfig) -> Self {
        Self { schedule: vec![(0, OptimizerKind::Gn)], gn: cfg, ..Self::default() }
    }
    pub fn sgd(cfg: SgdConfig) -> Self {
        Self { schedule: vec![(0, OptimizerKind::Sgd)], sgd: cfg, ..Self::default() }
    }
    pub fn adam(cfg: AdamConfig) -> Self {
        Self { schedule: vec![(0, OptimizerKind::Adam)], adam: cfg, ..Self::default() }
    }
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        Self {
            schedule: vec![(0, OptimizerKind::Gn)],
            gn: GnConfig::new(1.0),
            sgd: SgdConfig { lr: 0.1, weight_decay: 0.0 },
            adam: AdamConfig::new(1e-3),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub optimizer: OptimizerSpec,
    pub regime: Regime,
    /// Seeds batch order and augmentation.
    pub batch_seed: u64,
    /// Random pad-and-crop on CIFAR-shaped batches.
    pub augment: bool,
    /// Re-evaluate the loss on each mini-batch after its update.
    pub track_batch_loss: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Model step after the update.
    pub step: u64,
    /// Epoch the batch was drawn in.
    pub epoch: u64,
    pub optimizer: OptimizerKind,
    pub loss_before: f64,
    pub loss_after: Option<f64>,
    /// Per-block pseudoinverse ranks of a GN step.
    pub ranks: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: Option<f64>,
}

/// Loss and accuracy over a dataset, forwarding at most `chunk` samples at a
/// time. The loss is the sample-weighted mean over chunks.
pub fn evaluate(model: &RevMlp, ds: &Dataset, kind: LossKind, chunk: usize) -> Result<Evaluation> {
    let n = ds.len();
    let chunk = chunk.max(1);
    let (mut loss, mut correct) = (0.0, 0.0);
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let idx: Vec<usize> = (start..end).collect();
        let x = ds.x.select_cols(&idx);
        let y = ds.targets.select(&idx);
        let f = logits(&model.predict(&x)?, model.d_y());
        let w = (end - start) as f64;
        loss += w * loss_value(kind, &f, &y)?;
        if let TargetBatch::Labels(_) = y {
            correct += w * accuracy(&f, &y);
        }
        start = end;
    }
    let accuracy = matches!(ds.targets, TargetBatch::Labels(_)).then(|| correct / n as f64);
    Ok(Evaluation { loss: loss / n as f64, accuracy })
}

pub struct Trainer<'a> {
    pub model: RevMlp,
    cfg: TrainConfig,
    data: &'a Dataset,
    plan: Option<BatchPlan>,
    state: OptState,
    active: Option<OptimizerKind>,
    full_epochs: u64,
}

impl<'a> Trainer<'a> {
    pub fn new(model: RevMlp, cfg: TrainConfig, data: &'a Dataset) -> Result<Self> {
        if data.d() != model.d() {
            return Err(TrainError::Config(format!("dataset width {} does not match model width {}", data.d(), model.d())));
        }
        switch_schedule(0, &cfg.optimizer.schedule)?;
        let plan = match cfg.regime {
            Regime::FullBatch => None,
            Regime::MiniBatch(n) => Some(BatchPlan::new(n, cfg.batch_seed, data.len())?),
        };
        if cfg.augment && data.d() != CIFAR_DIM {
            return Err(TrainError::Config("augmentation needs CIFAR-shaped inputs".into()));
        }
        Ok(Self { model, cfg, data, plan, state: OptState::new(), active: None, full_epochs: 0 })
    }

    /// Completed epochs.
    pub fn epoch(&self) -> u64 {
        match &self.plan {
            Some(p) => p.epoch(),
            None => self.full_epochs,
        }
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    fn batch(&mut self) -> Result<(Mat, TargetBatch)> {
        let (x, y) = match &mut self.plan {
            Some(plan) => next_batch(self.data, plan)?,
            None => (self.data.x.clone(), self.data.targets.clone()),
        };
        if self.cfg.augment {
            let seed = self.cfg.batch_seed ^ (self.model.step().wrapping_mul(0x9E37_79B9_7F4A_7C15));
            return Ok((augment_cifar(&x, seed)?, y));
        }
        Ok((x, y))
    }

    /// One update on the next batch. Non-finite values anywhere in the step
    /// surface as [`TrainError::Diverged`].
    pub fn step(&mut self) -> Result<StepRecord> {
        let step = self.model.step();
        self.step_inner().map_err(|e| if is_nonfinite(&e) { TrainError::Diverged { step, what: "activation" } } else { e })
    }

    fn step_inner(&mut self) -> Result<StepRecord> {
        let epoch = self.epoch();
        let kind = switch_schedule(epoch, &self.cfg.optimizer.schedule)?;
        if self.active != Some(kind) {
            // fresh moments whenever Adam (re)starts
            self.state = OptState::new();
            self.active = Some(kind);
        }
        let (x, y) = self.batch()?;
        let lk = self.cfg.loss;
        let mut ranks = Vec::new();
        let loss_before = match kind {
            OptimizerKind::Gn => {
                let report = gn_step(&mut self.model, &x, &y, lk, &self.cfg.optimizer.gn)?;
                ranks = report.blocks.iter().map(|b| (b.rank1, b.rank2)).collect();
                report.loss_before
            }
            OptimizerKind::Sgd | OptimizerKind::Adam => {
                let (out, cache) = self.model.forward(&x)?;
                let f = logits(&out, self.model.d_y());
                let loss = loss_value(lk, &f, &y)?;
                if loss.is_finite() {
                    let eps = functional_gradient(lk, &f, &y, self.model.d())?;
                    if kind == OptimizerKind::Sgd {
                        sgd_step(&mut self.model, &cache, &eps, &self.cfg.optimizer.sgd)?;
                    } else {
                        adam_step(&mut self.model, &cache, &eps, &self.cfg.optimizer.adam, &mut self.state)?;
                    }
                }
                loss
            }
        };
        let step = self.model.step();
        if !loss_before.is_finite() {
            return Err(TrainError::Diverged { step, what: "loss" });
        }
        if self.model.blocks().iter().any(|b| !b.w1().is_finite() || !b.w2().is_finite()) {
            return Err(TrainError::Diverged { step, what: "weights" });
        }
        let loss_after = if self.cfg.track_batch_loss {
            let f = logits(&self.model.predict(&x)?, self.model.d_y());
            Some(loss_value(lk, &f, &y)?)
        } else {
            None
        };
        if self.plan.is_none() {
            self.full_epochs += 1;
        }
        Ok(StepRecord { step, epoch, optimizer: kind, loss_before, loss_after, ranks })
    }

    /// Steps until the epoch counter advances.
    pub fn run_epoch(&mut self) -> Result<Vec<StepRecord>> {
        let start = self.epoch();
        let mut records = Vec::new();
        while self.epoch() == start {
            records.push(self.step()?);
        }
        Ok(records)
    }
}

fn is_nonfinite(e: &TrainError) -> bool {
    use crate::linalg::LinalgError::NonFinite;
    matches!(
        e,
        TrainError::Loss(LossError::NonFinite)
            | TrainError::Revnet(RevnetError::Linalg(NonFinite(_)))
            | TrainError::Optim(OptimError::Linalg(NonFinite(_)))
            | TrainError::Optim(OptimError::Loss(LossError::NonFinite))
            | TrainError::Optim(OptimError::Revnet(RevnetError::Linalg(NonFinite(_))))
    )
}

#[cfg(test)]
mod tests;
