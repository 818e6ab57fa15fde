//! `revgn analyze`: similarity metrics recomputed from checkpoints.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use revgn_core::analysis::{NtkMatrix, ProbeSet};
use revgn_core::revnet::{load_checkpoint, CheckpointMeta, RevMlp};

use crate::config::RunConfig;
use crate::metrics::{MetricsRow, MetricsWriter};
use crate::run::{checkpoint_name, fill_similarity, load_data, probe_for, Manifest, Reference, MANIFEST};

pub const ANALYSIS_CSV: &str = "analysis.csv";

/// Nearest `manifest.json` at or above the checkpoint's directory.
pub fn find_manifest(ckpt: &Path) -> Result<PathBuf> {
    let start = ckpt.parent().unwrap_or(Path::new("."));
    let start = if start.as_os_str().is_empty() { Path::new(".") } else { start };
    start
        .ancestors()
        .map(|d| d.join(MANIFEST))
        .find(|p| p.is_file())
        .ok_or_else(|| anyhow!("no {MANIFEST} above {}", ckpt.display()))
}

struct RunContext {
    dir: PathBuf,
    manifest: Manifest,
    probe: ProbeSet,
}

fn context_for(manifest_path: &Path, d_y: usize) -> Result<RunContext> {
    let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(manifest_path)?)
        .with_context(|| format!("parsing {}", manifest_path.display()))?;
    let cfg = RunConfig::parse(&manifest.config_text)?;
    let (train, test) = load_data(&cfg, &manifest.data_path)?;
    let probe = probe_for(&cfg, &train, &test, d_y)?;
    Ok(RunContext { dir: manifest_path.parent().unwrap().to_path_buf(), manifest, probe })
}

fn same_architecture(a: &RevMlp, b: &RevMlp) -> bool {
    (a.d(), a.d_prime(), a.depth(), a.d_y(), a.activation()) == (b.d(), b.d_prime(), b.depth(), b.d_y(), b.activation())
}

fn load(path: &Path) -> Result<(RevMlp, CheckpointMeta)> {
    load_checkpoint(path).with_context(|| format!("loading {}", path.display()))
}

/// Rows for every checkpoint matching `pattern`, against the lineage's
/// epoch-0 checkpoint or `against`. Rows are appended to `analysis.csv`
/// next to each run's manifest and returned.
pub fn analyze(pattern: &str, against: Option<&Path>) -> Result<Vec<MetricsRow>> {
    let mut paths: Vec<PathBuf> = glob::glob(pattern)?.collect::<Result<_, _>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "rgn"));
    paths.sort();
    if paths.is_empty() {
        bail!("no checkpoints match {pattern}");
    }
    let fixed_ref = against.map(load).transpose()?;

    let mut contexts: BTreeMap<PathBuf, RunContext> = BTreeMap::new();
    let mut previous: BTreeMap<PathBuf, NtkMatrix> = BTreeMap::new();
    let mut rows = Vec::new();
    for path in &paths {
        let (model, meta) = load(path)?;
        let manifest_path = find_manifest(path)?;
        if !contexts.contains_key(&manifest_path) {
            contexts.insert(manifest_path.clone(), context_for(&manifest_path, model.d_y())?);
        }
        let ctx = &contexts[&manifest_path];
        let lineage_dir = path.parent().unwrap().to_path_buf();
        let reference_model = match &fixed_ref {
            Some((m, _)) => m.clone(),
            None => load(&lineage_dir.join(checkpoint_name(0)))?.0,
        };
        if !same_architecture(&model, &reference_model) {
            bail!("{}: architecture differs from the reference checkpoint", path.display());
        }
        let reference = Reference::new(&reference_model, &ctx.probe, true, true)?;
        let run_id = ctx
            .manifest
            .lineages
            .iter()
            .find(|l| l.checkpoint_dir == lineage_dir || ctx.dir.join(&l.checkpoint_dir) == lineage_dir || l.checkpoint_dir.file_name() == lineage_dir.file_name() && l.seed == model.seed())
            .map(|l| l.run_id.clone())
            .unwrap_or_else(|| lineage_dir.display().to_string());
        let mut row = MetricsRow::new(&run_id, model.seed(), meta.epoch.unwrap_or(0), meta.step);
        let kernel = fill_similarity(&mut row, &model, &ctx.probe, &reference, previous.get(&lineage_dir))?;
        if let Some(k) = kernel {
            previous.insert(lineage_dir, k);
        }
        let mut w = MetricsWriter::append(&ctx.dir.join(super::analyze::ANALYSIS_CSV))?;
        w.write(&row)?;
        rows.push(row);
    }
    Ok(rows)
}
