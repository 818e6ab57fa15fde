//! `revgn train`: seeds × learning rates, metrics, checkpoints, manifest.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use anyhow::{Context, Result};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use revgn_core::analysis::{block_representations, linear_cka, ntk, ntk_rate_of_change, ntk_similarity, weight_cosine, NtkMatrix, ProbeSet};
use revgn_core::data::{load_cifar10, load_mnist, load_uci_csv, subset, synthetic_regression, Dataset};
use revgn_core::optim::switch_schedule;
use revgn_core::revnet::{save_checkpoint, ModelSpec, RevMlp};
use revgn_core::train::{evaluate, Regime, TrainConfig, TrainError, Trainer};
use revgn_core::Mat;

use crate::config::{DatasetName, RunConfig};
use crate::metrics::{join_floats, join_ranks, MetricsRow, MetricsWriter};

pub const MANIFEST: &str = "manifest.json";
pub const METRICS: &str = "metrics.csv";
pub const SWEEP_REPORT: &str = "sweep_report.json";
const EVAL_CHUNK: usize = 2048;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config_text: String,
    pub config_hash: String,
    pub resolved: serde_json::Value,
    pub data_path: PathBuf,
    pub git_describe: String,
    pub lineages: Vec<LineageOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineageOutcome {
    pub run_id: String,
    pub seed: u32,
    pub lr: f64,
    pub checkpoint_dir: PathBuf,
    pub epochs_completed: u64,
    pub initial_train_loss: f64,
    pub final_train_loss: Option<f64>,
    /// Set when the lineage was aborted.
    pub failure: Option<String>,
}

impl LineageOutcome {
    /// Aborted, or ended above its starting loss.
    pub fn diverged(&self) -> bool {
        self.failure.is_some() || self.final_train_loss.is_none_or(|l| !(l <= self.initial_train_loss))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub optimizer: String,
    pub entries: Vec<SweepEntry>,
    /// Largest learning rate for which no seed diverged.
    pub selected_lr: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepEntry {
    pub lr: f64,
    pub diverged_seeds: Vec<u32>,
    pub mean_final_train_loss: Option<f64>,
}

pub fn sweep_report(optimizer: &str, outcomes: &[LineageOutcome]) -> SweepReport {
    let mut lrs: Vec<f64> = outcomes.iter().map(|o| o.lr).collect();
    lrs.sort_by(f64::total_cmp);
    lrs.dedup();
    let entries: Vec<SweepEntry> = lrs
        .iter()
        .map(|&lr| {
            let runs: Vec<_> = outcomes.iter().filter(|o| o.lr == lr).collect();
            let diverged_seeds = runs.iter().filter(|o| o.diverged()).map(|o| o.seed).collect::<Vec<_>>();
            let finals: Vec<f64> = runs.iter().filter_map(|o| o.final_train_loss).collect();
            let mean = (diverged_seeds.is_empty() && !finals.is_empty()).then(|| finals.iter().sum::<f64>() / finals.len() as f64);
            SweepEntry { lr, diverged_seeds, mean_final_train_loss: mean }
        })
        .collect();
    let selected_lr = entries.iter().rev().find(|e| e.diverged_seeds.is_empty()).map(|e| e.lr);
    SweepReport { optimizer: optimizer.into(), entries, selected_lr }
}

pub fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

pub fn load_data(cfg: &RunConfig, path: &Path) -> Result<(Dataset, Dataset)> {
    let (train, test) = match cfg.data.name {
        DatasetName::Mnist => load_mnist(path)?,
        DatasetName::Cifar10 => load_cifar10(path)?,
        DatasetName::Uci => {
            let targets: Vec<&str> = cfg.data.targets.iter().map(String::as_str).collect();
            load_uci_csv(path, &targets, cfg.data.split_seed)?
        }
        DatasetName::Synthetic => {
            let (d, n, seed) = cfg.data.synthetic;
            synthetic_regression(d, n, seed)?
        }
    };
    let train = match cfg.data.subset {
        Some(k) if k < train.len() => subset(&train, k, cfg.data.subset_seed)?,
        _ => train,
    };
    Ok((train, test))
}

/// Probe drawn from the test split (train split if the test split is empty).
pub fn probe_for(cfg: &RunConfig, train: &Dataset, test: &Dataset, d_y: usize) -> Result<ProbeSet> {
    let src = if test.is_empty() { train } else { test };
    let m = cfg.analysis.probe_size.min(src.len());
    Ok(ProbeSet::sample(&src.x, m, d_y, cfg.analysis.probe_seed)?)
}

pub fn model_spec(cfg: &RunConfig, d: usize, d_y: usize, seed: u32) -> ModelSpec {
    ModelSpec {
        d,
        d_prime: cfg.model.d_prime,
        depth: cfg.model.depth,
        d_y,
        seed,
        init: cfg.model.init,
        no_bottleneck: cfg.model.no_bottleneck,
        activation: cfg.model.activation,
    }
}

pub fn checkpoint_name(epoch: u64) -> String {
    format!("epoch_{epoch:04}.rgn")
}

/// Reference quantities for similarity metrics.
pub struct Reference {
    pub model: RevMlp,
    pub ntk: Option<NtkMatrix>,
    pub reps: Vec<Mat>,
}

impl Reference {
    pub fn new(model: &RevMlp, probe: &ProbeSet, want_ntk: bool, want_cka: bool) -> Result<Self> {
        let ntk = want_ntk.then(|| ntk(model, probe)).transpose()?;
        let reps = if want_cka { (1..=model.depth()).map(|l| block_representations(model, probe, l)).collect::<Result<_, _>>()? } else { Vec::new() };
        Ok(Self { model: model.clone(), ntk, reps })
    }
}

/// Fills the similarity columns of `row` and returns the model's kernel for
/// the next rate computation.
pub fn fill_similarity(
    row: &mut MetricsRow,
    model: &RevMlp,
    probe: &ProbeSet,
    reference: &Reference,
    previous: Option<&NtkMatrix>,
) -> Result<Option<NtkMatrix>> {
    let mut kernel = None;
    if let Some(k0) = &reference.ntk {
        let k = ntk(model, probe)?;
        row.ntk_similarity = Some(ntk_similarity(&k, k0)?);
        row.ntk_rate = previous.map(|p| ntk_rate_of_change(&k, p)).transpose()?;
        kernel = Some(k);
    }
    if !reference.reps.is_empty() {
        let cka = reference
            .reps
            .iter()
            .enumerate()
            .map(|(i, r0)| Ok(linear_cka(&block_representations(model, probe, i + 1)?, r0)?))
            .collect::<Result<Vec<f64>>>()?;
        row.cka = join_floats(&cka);
    }
    row.weight_cosine = join_floats(&weight_cosine(model, &reference.model)?);
    Ok(kernel)
}

struct Lineage<'a> {
    cfg: &'a RunConfig,
    run_id: String,
    seed: u32,
    lr: f64,
    dir: PathBuf,
    train: &'a Dataset,
    test: &'a Dataset,
    d_y: usize,
}

impl Lineage<'_> {
    fn eval_row(&self, model: &RevMlp, epoch: u64) -> Result<MetricsRow> {
        let mut row = MetricsRow::new(&self.run_id, self.seed, epoch, model.step());
        row.lr = Some(self.lr);
        row.optimizer = switch_schedule(epoch, &self.cfg.optimizer.schedule)?.to_string();
        let ev = evaluate(model, self.train, self.cfg.loss, EVAL_CHUNK)?;
        row.train_loss = Some(ev.loss);
        row.train_acc = ev.accuracy;
        if !self.test.is_empty() {
            let ev = evaluate(model, self.test, self.cfg.loss, EVAL_CHUNK)?;
            row.test_loss = Some(ev.loss);
            row.test_acc = ev.accuracy;
        }
        Ok(row)
    }

    fn run(&self, mut sink: impl FnMut(&MetricsRow) -> Result<()>) -> Result<LineageOutcome> {
        let cfg = self.cfg;
        std::fs::create_dir_all(&self.dir)?;
        let model = RevMlp::from_spec(&model_spec(cfg, self.train.d(), self.d_y, self.seed))?;
        let analysis_on = cfg.analysis.every > 0 && (cfg.analysis.ntk || cfg.analysis.cka);
        let probe = analysis_on.then(|| probe_for(cfg, self.train, self.test, self.d_y)).transpose()?;
        let reference = Reference::new(&model, probe.as_ref().unwrap_or(&empty_probe(&model)), cfg.analysis.ntk && analysis_on, cfg.analysis.cka && analysis_on)?;
        let started = Instant::now();

        let mut row = self.eval_row(&model, 0)?;
        let mut prev_kernel = None;
        if let Some(p) = &probe {
            prev_kernel = fill_similarity(&mut row, &model, p, &reference, None)?;
        }
        row.wall_ms = Some(0);
        let initial = row.train_loss.unwrap_or(f64::NAN);
        let mut outcome = LineageOutcome {
            run_id: self.run_id.clone(),
            seed: self.seed,
            lr: self.lr,
            checkpoint_dir: self.dir.clone(),
            epochs_completed: 0,
            initial_train_loss: initial,
            final_train_loss: Some(initial),
            failure: None,
        };
        sink(&row)?;
        if cfg.checkpoint_every > 0 {
            save_checkpoint(&self.dir.join(checkpoint_name(0)), &model, &cfg.hash, Some(0))?;
        }

        let tcfg = TrainConfig {
            loss: cfg.loss,
            optimizer: cfg.with_lr(self.lr).optimizer,
            regime: cfg.regime,
            batch_seed: self.seed as u64,
            augment: cfg.data.augment,
            track_batch_loss: true,
        };
        let mut trainer = Trainer::new(model, tcfg, self.train)?;
        for epoch in 1..=cfg.epochs {
            let records = match trainer.run_epoch() {
                Ok(r) => r,
                Err(e @ TrainError::Diverged { .. }) => {
                    warn!("{} seed {}: {e}", self.run_id, self.seed);
                    outcome.failure = Some(format!("epoch {epoch}: {e}"));
                    outcome.final_train_loss = None;
                    return Ok(outcome);
                }
                Err(e) => return Err(e.into()),
            };
            let model = &trainer.model;
            let mut row = self.eval_row(model, epoch)?;
            row.optimizer = records.last().map(|r| r.optimizer.to_string()).unwrap_or_default();
            let pct: Vec<f64> = records
                .iter()
                .filter_map(|r| r.loss_after.map(|a| 100.0 * (a - r.loss_before) / r.loss_before))
                .collect();
            if !pct.is_empty() {
                row.minibatch_loss_change_pct = Some(pct.iter().sum::<f64>() / pct.len() as f64);
            }
            if let Some(r) = records.last() {
                row.pinv_ranks = join_ranks(&r.ranks);
            }
            let due = epoch % cfg.analysis.every.max(1) == 0 || epoch == cfg.epochs;
            if let (Some(p), true) = (&probe, due) {
                prev_kernel = fill_similarity(&mut row, model, p, &reference, prev_kernel.as_ref())?;
            }
            row.wall_ms = Some(started.elapsed().as_millis() as u64);
            let loss = row.train_loss.unwrap_or(f64::NAN);
            sink(&row)?;
            if cfg.checkpoint_every > 0 && (epoch % cfg.checkpoint_every == 0 || epoch == cfg.epochs) {
                save_checkpoint(&self.dir.join(checkpoint_name(epoch)), model, &cfg.hash, Some(epoch))?;
            }
            outcome.epochs_completed = epoch;
            if !loss.is_finite() {
                outcome.failure = Some(format!("epoch {epoch}: non-finite train loss"));
                outcome.final_train_loss = None;
                return Ok(outcome);
            }
            outcome.final_train_loss = Some(loss);
            info!("{} seed {} epoch {epoch}: train loss {loss:.6}", self.run_id, self.seed);
        }
        Ok(outcome)
    }
}

fn empty_probe(model: &RevMlp) -> ProbeSet {
    ProbeSet { x: Mat::zeros(model.d(), 0), d_y: model.d_y(), seed: 0 }
}

pub struct TrainSummary {
    pub outcomes: Vec<LineageOutcome>,
    pub sweep: Option<SweepReport>,
    pub output_dir: PathBuf,
}

impl TrainSummary {
    pub fn any_failed(&self) -> bool {
        self.outcomes.iter().any(|o| o.failure.is_some())
    }
}

fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest)?;
    std::fs::write(dir.join(MANIFEST), text + "\n")?;
    Ok(())
}

pub fn train(cfg: &RunConfig, config_text: &str) -> Result<TrainSummary> {
    let data_path = cfg.data_path();
    if cfg.data.name != DatasetName::Synthetic && !data_path.exists() {
        anyhow::bail!("dataset path {} does not exist", data_path.display());
    }
    let (train, test) = load_data(cfg, &data_path).with_context(|| format!("loading {}", data_path.display()))?;
    let d_y = cfg.model.d_y.unwrap_or(train.d_y);
    if let Regime::MiniBatch(n) = cfg.regime {
        if n > train.len() {
            anyhow::bail!("batch size {n} exceeds training set size {}", train.len());
        }
    }
    std::fs::create_dir_all(&cfg.output_dir)?;
    let metrics_path = cfg.output_dir.join(METRICS);
    if metrics_path.exists() {
        std::fs::remove_file(&metrics_path)?;
    }
    let mut manifest = Manifest {
        config_text: config_text.to_string(),
        config_hash: cfg.hash.clone(),
        resolved: serde_json::to_value(cfg)?,
        data_path: data_path.clone(),
        git_describe: git_describe(),
        lineages: Vec::new(),
    };
    write_manifest(&cfg.output_dir, &manifest)?;

    let sweeping = !cfg.lr_sweep.is_empty();
    let lrs = if sweeping { cfg.lr_sweep.clone() } else { vec![cfg.lr()] };
    let mut lineages = Vec::new();
    for &lr in &lrs {
        for &seed in &cfg.seeds {
            let (run_id, dir) = if sweeping {
                (format!("{}_lr{lr}", cfg.name), cfg.output_dir.join(format!("lr{lr}")).join(format!("seed{seed}")))
            } else {
                (cfg.name.clone(), cfg.output_dir.join(format!("seed{seed}")))
            };
            lineages.push(Lineage { cfg, run_id, seed, lr, dir, train: &train, test: &test, d_y });
        }
    }

    let mut writer = MetricsWriter::append(&metrics_path)?;
    let mut outcomes = Vec::new();
    if cfg.parallel_seeds {
        // rows are buffered per lineage and written in lineage order
        let results: Vec<Result<(LineageOutcome, Vec<MetricsRow>)>> = std::thread::scope(|s| {
            let handles: Vec<_> = lineages
                .iter()
                .map(|l| {
                    s.spawn(move || {
                        let mut rows = Vec::new();
                        let out = l.run(|r| {
                            rows.push(r.clone());
                            Ok(())
                        })?;
                        Ok((out, rows))
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("lineage thread panicked")).collect()
        });
        for r in results {
            let (out, rows) = r?;
            for row in &rows {
                writer.write(row)?;
            }
            outcomes.push(out);
        }
    } else {
        for l in &lineages {
            outcomes.push(l.run(|r| writer.write(r))?);
        }
    }

    let sweep = sweeping.then(|| sweep_report(&cfg.sweep_kind().to_string(), &outcomes));
    if let Some(rep) = &sweep {
        std::fs::write(cfg.output_dir.join(SWEEP_REPORT), serde_json::to_string_pretty(rep)? + "\n")?;
    }
    manifest.lineages = outcomes.clone();
    write_manifest(&cfg.output_dir, &manifest)?;
    Ok(TrainSummary { outcomes, sweep, output_dir: cfg.output_dir.clone() })
}
