//! Metrics CSV, schema v1.
//!
//! One row per (run, seed, epoch). Per-block quantities are `;`-joined lists;
//! pinv ranks are `r1/r2` per block. Empty fields mean "not computed".

use std::fs::{File, OpenOptions};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

pub const SCHEMA: &str = "v1";
/// First header field; carries the schema version.
pub const SCHEMA_COLUMN: &str = "schema_v1";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    #[serde(rename = "schema_v1")]
    pub schema: String,
    pub run_id: String,
    pub seed: u32,
    pub epoch: u64,
    pub step: u64,
    pub optimizer: String,
    pub lr: Option<f64>,
    pub train_loss: Option<f64>,
    pub test_loss: Option<f64>,
    pub train_acc: Option<f64>,
    pub test_acc: Option<f64>,
    pub minibatch_loss_change_pct: Option<f64>,
    pub pinv_ranks: String,
    pub ntk_similarity: Option<f64>,
    pub ntk_rate: Option<f64>,
    pub cka: String,
    pub weight_cosine: String,
    pub wall_ms: Option<u64>,
}

impl MetricsRow {
    pub fn new(run_id: &str, seed: u32, epoch: u64, step: u64) -> Self {
        Self { schema: SCHEMA.into(), run_id: run_id.into(), seed, epoch, step, ..Self::default() }
    }

    pub fn cka_values(&self) -> Result<Vec<f64>> {
        split_floats(&self.cka)
    }

    pub fn weight_cosine_values(&self) -> Result<Vec<f64>> {
        split_floats(&self.weight_cosine)
    }
}

pub fn join_floats(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

pub fn split_floats(s: &str) -> Result<Vec<f64>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(';').map(|t| t.parse().with_context(|| format!("bad list entry {t:?}"))).collect()
}

pub fn join_ranks(ranks: &[(usize, usize)]) -> String {
    ranks.iter().map(|(a, b)| format!("{a}/{b}")).collect::<Vec<_>>().join(";")
}

/// Appending writer. Writes the header only when the file is new or empty.
pub struct MetricsWriter {
    inner: csv::Writer<File>,
}

impl MetricsWriter {
    pub fn append(path: &Path) -> Result<Self> {
        let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
        if !fresh {
            let mut r = csv::Reader::from_path(path)?;
            if r.headers()?.get(0) != Some(SCHEMA_COLUMN) {
                bail!("{} is not a {SCHEMA} metrics file", path.display());
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path).with_context(|| format!("opening {}", path.display()))?;
        let inner = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
        Ok(Self { inner })
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<()> {
        self.inner.serialize(row)?;
        self.inner.flush()?;
        Ok(())
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    if r.headers()?.get(0) != Some(SCHEMA_COLUMN) {
        bail!("{} is not a {SCHEMA} metrics file", path.display());
    }
    let mut rows = Vec::new();
    for (i, rec) in r.deserialize().enumerate() {
        let row: MetricsRow = rec.with_context(|| format!("{} row {}", path.display(), i + 2))?;
        if row.schema != SCHEMA {
            bail!("{} row {}: schema {:?}", path.display(), i + 2, row.schema);
        }
        rows.push(row);
    }
    Ok(rows)
}
