//! `revgn plot`: self-contained SVG curves, mean with a min/max band over
//! seeds.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};

use crate::metrics::{read_metrics, MetricsRow};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// Per-epoch mean, min and max over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub label: String,
    /// Colour index; bands of one run share it.
    pub group: usize,
    pub dashed: bool,
    pub points: Vec<(f64, f64, f64, f64)>,
}

fn band(rows: &[&MetricsRow], label: String, group: usize, dashed: bool, get: impl Fn(&MetricsRow) -> Option<f64>) -> Option<Band> {
    let mut by_epoch: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for r in rows {
        if let Some(v) = get(r).filter(|v| v.is_finite()) {
            by_epoch.entry(r.epoch).or_default().push(v);
        }
    }
    let points: Vec<_> = by_epoch
        .into_iter()
        .map(|(e, vs)| {
            let mean = vs.iter().sum::<f64>() / vs.len() as f64;
            let lo = vs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (e as f64, mean, lo, hi)
        })
        .collect();
    (!points.is_empty()).then_some(Band { label, group, dashed, points })
}

fn num(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e4).contains(&a) {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.0e}")
    }
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>, log: bool) -> Option<Self> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| !log || *v > 0.0) {
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return None;
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        if log {
            lo = lo.floor();
            hi = hi.ceil();
        } else {
            let step = nice_step(hi - lo);
            lo = (lo / step).floor() * step;
            hi = (hi / step).ceil() * step;
        }
        Some(Self { lo, hi, log })
    }

    fn frac(&self, v: f64) -> f64 {
        let v = if self.log { v.max(1e-300).log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let step = ((self.hi - self.lo) / 8.0).ceil().max(1.0);
            let mut t = Vec::new();
            let mut e = self.lo;
            while e <= self.hi + 1e-9 {
                t.push(((e - self.lo) / (self.hi - self.lo), format!("1e{}", e as i64)));
                e += step;
            }
            t
        } else {
            let step = nice_step(self.hi - self.lo);
            let count = ((self.hi - self.lo) / step).round() as usize;
            (0..=count).map(|i| (i as f64 / count as f64, num(self.lo + i as f64 * step))).collect()
        }
    }
}

/// 1, 2 or 5 times a power of ten, giving about five intervals.
fn nice_step(range: f64) -> f64 {
    let raw = range / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let m = raw / mag;
    mag * if m <= 1.0 { 1.0 } else if m <= 2.0 { 2.0 } else if m <= 5.0 { 5.0 } else { 10.0 }
}

/// Renders one figure. Pure function of its inputs.
pub fn render(title: &str, y_label: &str, log_y: bool, bands: &[Band]) -> Option<String> {
    let xs = Axis::new(bands.iter().flat_map(|b| b.points.iter().map(|p| p.0)), false)?;
    let ys = Axis::new(bands.iter().flat_map(|b| b.points.iter().flat_map(|p| [p.2, p.3])), log_y)?;
    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let px = |x: f64| LEFT + xs.frac(x) * pw;
    let py = |y: f64| TOP + (1.0 - ys.frac(y)) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="14">{}</text>"#, LEFT + pw / 2.0, escape(title));
    let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for (f, label) in xs.ticks() {
        let x = LEFT + f * pw;
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, TOP + ph, TOP + ph + 5.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#, TOP + ph + 18.0);
    }
    for (f, label) in ys.ticks() {
        let y = TOP + (1.0 - f) * ph;
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##, LEFT + pw);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"#, LEFT - 6.0, y + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">epoch</text>"#, LEFT + pw / 2.0, HEIGHT - 12.0);
    let _ = writeln!(s, r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#, TOP + ph / 2.0, TOP + ph / 2.0, escape(y_label));

    for (i, b) in bands.iter().enumerate() {
        let color = PALETTE[b.group % PALETTE.len()];
        let spread = b.points.iter().any(|p| p.2 != p.3);
        if spread {
            let mut pts: Vec<String> = b.points.iter().map(|p| format!("{:.2},{:.2}", px(p.0), py(p.3))).collect();
            pts.extend(b.points.iter().rev().map(|p| format!("{:.2},{:.2}", px(p.0), py(p.2))));
            let _ = writeln!(s, r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, pts.join(" "));
        }
        let d: Vec<String> = b
            .points
            .iter()
            .enumerate()
            .map(|(k, p)| format!("{}{:.2},{:.2}", if k == 0 { "M" } else { "L" }, px(p.0), py(p.1)))
            .collect();
        let dash = if b.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(s, r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#, d.join(" "));
        let ly = TOP + 12.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 12.0;
        let _ = writeln!(s, r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="1.5"{dash}/>"#, lx + 20.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&b.label));
    }
    s.push_str("</svg>\n");
    Some(s)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn last_cka(r: &MetricsRow) -> Option<f64> {
    r.cka_values().ok()?.last().copied()
}

/// Writes `loss.svg`, `accuracy.svg`, `ntk.svg` and `cka.svg` (those with
/// data) into `out`.
pub fn plot(csv: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let rows = read_metrics(csv)?;
    if rows.is_empty() {
        bail!("{} has no rows", csv.display());
    }
    let mut runs: BTreeMap<&str, Vec<&MetricsRow>> = BTreeMap::new();
    for r in &rows {
        runs.entry(r.run_id.as_str()).or_default().push(r);
    }
    type Getter = fn(&MetricsRow) -> Option<f64>;
    let figures: [(&str, &str, &str, bool, &[(&str, bool, Getter)]); 4] = [
        ("loss", "Loss", "loss", true, &[("train", false, |r| r.train_loss), ("test", true, |r| r.test_loss)]),
        ("accuracy", "Accuracy", "accuracy", false, &[("train", false, |r| r.train_acc), ("test", true, |r| r.test_acc)]),
        ("ntk", "NTK similarity to init", "cosine", false, &[("", false, |r| r.ntk_similarity)]),
        ("cka", "Last-block CKA to init", "linear CKA", false, &[("", false, last_cka)]),
    ];
    std::fs::create_dir_all(out)?;
    let mut written = Vec::new();
    for (file, title, y_label, log_y, series) in figures {
        let mut bands = Vec::new();
        for (group, (run, rs)) in runs.iter().enumerate() {
            for (suffix, dashed, get) in series {
                let label = if suffix.is_empty() { run.to_string() } else { format!("{run} {suffix}") };
                bands.extend(band(rs, label, group, *dashed, get));
            }
        }
        if let Some(svg) = render(title, y_label, log_y, &bands) {
            let path = out.join(format!("{file}.svg"));
            std::fs::write(&path, svg)?;
            written.push(path);
        }
    }
    if written.is_empty() {
        bail!("{} has no plottable columns", csv.display());
    }
    Ok(written)
}
