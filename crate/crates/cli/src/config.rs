//! Run configuration: flat `key = value` text with dotted keys.
//!
//! ```text
//! run.name = mnist_gn
//! run.seeds = 0, 1, 2
//! data.name = mnist
//! model.d_prime = 1024
//! optim.kind = gn
//! optim.gn.lr = 1.0
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use revgn_core::losses::LossKind;
use revgn_core::optim::{AdamConfig, GnConfig, OptimizerKind, SgdConfig};
use revgn_core::revnet::{Activation, InitScheme};
use revgn_core::train::{OptimizerSpec, Regime};
use revgn_core::PinvPolicy;

/// Dataset root used when `data.path` is relative or missing.
pub const DATA_DIR_ENV: &str = "REVGN_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetName {
    Mnist,
    Cifar10,
    Uci,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataSpec {
    pub name: DatasetName,
    pub path: Option<PathBuf>,
    pub subset: Option<usize>,
    pub subset_seed: u64,
    pub augment: bool,
    /// UCI target columns.
    pub targets: Vec<String>,
    pub split_seed: u64,
    /// Synthetic width, sample count and teacher seed.
    pub synthetic: (usize, usize, u64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelConfig {
    pub d_prime: usize,
    pub depth: usize,
    /// Defaults to the dataset's `d_y`.
    pub d_y: Option<usize>,
    pub init: InitScheme,
    pub no_bottleneck: bool,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisSpec {
    pub probe_size: usize,
    pub probe_seed: u64,
    pub ntk: bool,
    pub cka: bool,
    /// Epochs between analysis rows; 0 disables.
    pub every: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub name: String,
    pub output_dir: PathBuf,
    pub seeds: Vec<u32>,
    pub epochs: u64,
    pub regime: Regime,
    pub loss: LossKind,
    pub checkpoint_every: u64,
    pub parallel_seeds: bool,
    pub data: DataSpec,
    pub model: ModelConfig,
    pub optimizer: OptimizerSpec,
    /// Learning rates for the first scheduled optimizer; one run each.
    pub lr_sweep: Vec<f64>,
    pub analysis: AnalysisSpec,
    /// SHA-256 of the config text.
    pub hash: String,
}

struct Keys {
    map: BTreeMap<String, String>,
}

impl Keys {
    fn take(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.take(key) {
            Some(v) => v.parse().map_err(|e| anyhow!("{key} = {v:?}: {e}")),
            None => Ok(default),
        }
    }

    fn opt<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.take(key).map(|v| v.parse().map_err(|e| anyhow!("{key} = {v:?}: {e}"))).transpose()
    }

    fn list<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        let Some(v) = self.take(key) else { return Ok(None) };
        v.split(',')
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e| anyhow!("{key}: {s:?}: {e}")))
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }
}

fn parse_schedule(text: &str) -> Result<Vec<(u64, OptimizerKind)>> {
    text.split(',')
        .map(|stage| {
            let (kind, epoch) = stage.trim().split_once(':').ok_or_else(|| anyhow!("schedule stage {stage:?} is not kind:epoch"))?;
            Ok((epoch.trim().parse()?, kind.trim().parse()?))
        })
        .collect()
}

fn parse_pinv(keys: &mut Keys) -> Result<PinvPolicy> {
    let default = PinvPolicy::default();
    let PinvPolicy::Truncate { rtol, atol } = default else { unreachable!() };
    let policy = match keys.take("optim.gn.pinv").as_deref().unwrap_or("truncate") {
        "truncate" => PinvPolicy::Truncate { rtol: keys.parse("optim.gn.rtol", rtol)?, atol: keys.parse("optim.gn.atol", atol)? },
        "damp" => PinvPolicy::Damp { frac: keys.parse("optim.gn.frac", 0.01)? },
        "noise" => PinvPolicy::Noise { frac: keys.parse("optim.gn.frac", 0.01)?, seed: keys.parse("optim.gn.noise_seed", 0)? },
        other => bail!("optim.gn.pinv = {other:?}: expected truncate, damp or noise"),
    };
    policy.validate()?;
    Ok(policy)
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let ini = ini::Ini::load_from_str(text).context("config syntax")?;
        let mut map = BTreeMap::new();
        for (section, props) in ini.iter() {
            if let Some(s) = section {
                bail!("sections are not supported ([{s}]); use dotted keys");
            }
            for (k, v) in props.iter() {
                if map.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                    bail!("duplicate key {k}");
                }
            }
        }
        let mut keys = Keys { map };

        let name = keys.take("run.name").ok_or_else(|| anyhow!("run.name is required"))?;
        let output_dir = keys.take("run.output_dir").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs").join(&name));
        let seeds = keys.list("run.seeds")?.unwrap_or_else(|| vec![0]);
        if seeds.is_empty() {
            bail!("run.seeds must not be empty");
        }
        let epochs = keys.parse("run.epochs", 1)?;
        let regime = match keys.take("run.regime").as_deref().unwrap_or("full_batch") {
            "full_batch" => Regime::FullBatch,
            "minibatch" => Regime::MiniBatch(keys.opt("run.batch_size")?.ok_or_else(|| anyhow!("minibatch regime needs run.batch_size"))?),
            other => bail!("run.regime = {other:?}: expected full_batch or minibatch"),
        };
        let loss = match keys.take("run.loss").as_deref() {
            Some("cross_entropy") => Some(LossKind::CrossEntropy),
            Some("square_loss") => Some(LossKind::SquareLoss),
            Some(other) => bail!("run.loss = {other:?}"),
            None => None,
        };
        let checkpoint_every = keys.parse("run.checkpoint_every", 1)?;
        let parallel_seeds = keys.parse("run.parallel_seeds", false)?;

        let data_name = match keys.take("data.name").as_deref() {
            Some("mnist") => DatasetName::Mnist,
            Some("cifar10") => DatasetName::Cifar10,
            Some("uci") => DatasetName::Uci,
            Some("synthetic") => DatasetName::Synthetic,
            Some(other) => bail!("data.name = {other:?}"),
            None => bail!("data.name is required"),
        };
        let data = DataSpec {
            path: keys.take("data.path").map(PathBuf::from),
            subset: keys.opt("data.subset")?,
            subset_seed: keys.parse("data.subset_seed", 0)?,
            augment: keys.parse("data.augment", false)?,
            targets: keys.list("data.targets")?.unwrap_or_default(),
            split_seed: keys.parse("data.split_seed", 0)?,
            synthetic: (keys.parse("data.synthetic_d", 8)?, keys.parse("data.synthetic_n", 64)?, keys.parse("data.teacher_seed", 0)?),
            name: data_name,
        };
        // classification datasets default to cross-entropy, regression to square loss
        let loss = loss.unwrap_or(match data.name {
            DatasetName::Mnist | DatasetName::Cifar10 => LossKind::CrossEntropy,
            DatasetName::Uci | DatasetName::Synthetic => LossKind::SquareLoss,
        });
        if data.name == DatasetName::Uci && data.targets.is_empty() {
            bail!("uci data needs data.targets");
        }

        let init = match keys.take("model.init").as_deref().unwrap_or("gaussian") {
            "gaussian" => InitScheme::Gaussian { sigma: keys.parse("model.init_sigma", 1e-3)? },
            "xavier" => InitScheme::Xavier,
            other => bail!("model.init = {other:?}"),
        };
        let activation = match keys.take("model.activation").as_deref().unwrap_or("relu") {
            "relu" => Activation::Relu,
            "linear" => Activation::Linear,
            other => bail!("model.activation = {other:?}"),
        };
        let no_bottleneck = keys.parse("model.no_bottleneck", false)?;
        let model = ModelConfig {
            d_prime: keys.opt("model.d_prime")?.ok_or_else(|| anyhow!("model.d_prime is required"))?,
            depth: keys.parse("model.depth", 2)?,
            d_y: keys.opt("model.d_y")?,
            init,
            no_bottleneck,
            activation,
        };
        if let Regime::MiniBatch(n) = regime {
            if n > model.d_prime && !no_bottleneck {
                bail!("run.batch_size = {n} exceeds model.d_prime = {}; set model.no_bottleneck to proceed", model.d_prime);
            }
            if n > model.d_prime {
                log::warn!("batch size {n} exceeds d_prime {}; no-bottleneck mode", model.d_prime);
            }
        }

        let schedule = match (keys.take("optim.kind"), keys.take("optim.schedule")) {
            (Some(_), Some(_)) => bail!("give either optim.kind or optim.schedule"),
            (Some(kind), None) => vec![(0, kind.parse()?)],
            (None, Some(s)) => parse_schedule(&s)?,
            (None, None) => bail!("optim.kind is required"),
        };
        let defaults = OptimizerSpec::default();
        let gn = GnConfig {
            lr: keys.parse("optim.gn.lr", defaults.gn.lr)?,
            pinv: parse_pinv(&mut keys)?,
            weight_decay: keys.parse("optim.gn.weight_decay", 0.0)?,
        };
        let sgd = SgdConfig { lr: keys.parse("optim.sgd.lr", defaults.sgd.lr)?, weight_decay: keys.parse("optim.sgd.weight_decay", 0.0)? };
        let adam = AdamConfig {
            lr: keys.parse("optim.adam.lr", defaults.adam.lr)?,
            beta1: keys.parse("optim.adam.beta1", defaults.adam.beta1)?,
            beta2: keys.parse("optim.adam.beta2", defaults.adam.beta2)?,
            eps_hat: keys.parse("optim.adam.eps", defaults.adam.eps_hat)?,
            weight_decay: keys.parse("optim.adam.weight_decay", 0.0)?,
        };
        let optimizer = OptimizerSpec { schedule, gn, sgd, adam };
        revgn_core::optim::switch_schedule(0, &optimizer.schedule)?;
        let lr_sweep = keys.list("optim.lr_sweep")?.unwrap_or_default();

        let analysis = AnalysisSpec {
            probe_size: keys.parse("analysis.probe_size", 100)?,
            probe_seed: keys.parse("analysis.probe_seed", 0)?,
            ntk: keys.parse("analysis.ntk", false)?,
            cka: keys.parse("analysis.cka", false)?,
            every: keys.parse("analysis.every", 1)?,
        };

        if let Some(k) = keys.map.keys().next() {
            bail!("unknown config key {k}");
        }
        let hash = Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
        Ok(RunConfig {
            name,
            output_dir,
            seeds,
            epochs,
            regime,
            loss,
            checkpoint_every,
            parallel_seeds,
            data,
            model,
            optimizer,
            lr_sweep,
            analysis,
            hash,
        })
    }

    /// Dataset location: `data.path` (relative paths resolved against
    /// `$REVGN_DATA_DIR`), else `$REVGN_DATA_DIR/<name>`, else `data/<name>`.
    pub fn data_path(&self) -> PathBuf {
        let root = std::env::var_os(DATA_DIR_ENV).map(PathBuf::from);
        let default_name = match self.data.name {
            DatasetName::Mnist => "mnist",
            DatasetName::Cifar10 => "cifar10",
            DatasetName::Uci => "uci.csv",
            DatasetName::Synthetic => "",
        };
        match (&self.data.path, root) {
            (Some(p), _) if p.is_absolute() => p.clone(),
            (Some(p), Some(root)) => root.join(p),
            (Some(p), None) => p.clone(),
            (None, Some(root)) => root.join(default_name),
            (None, None) => PathBuf::from("data").join(default_name),
        }
    }

    /// Optimizer whose learning rate `lr_sweep` varies.
    pub fn sweep_kind(&self) -> OptimizerKind {
        self.optimizer.schedule[0].1
    }

    /// Copy with the swept optimizer's learning rate replaced.
    pub fn with_lr(&self, lr: f64) -> RunConfig {
        let mut c = self.clone();
        match c.sweep_kind() {
            OptimizerKind::Gn => c.optimizer.gn.lr = lr,
            OptimizerKind::Sgd => c.optimizer.sgd.lr = lr,
            OptimizerKind::Adam => c.optimizer.adam.lr = lr,
        }
        c
    }

    /// Learning rate of the first scheduled optimizer.
    pub fn lr(&self) -> f64 {
        match self.sweep_kind() {
            OptimizerKind::Gn => self.optimizer.gn.lr,
            OptimizerKind::Sgd => self.optimizer.sgd.lr,
            OptimizerKind::Adam => self.optimizer.adam.lr,
        }
    }
}
