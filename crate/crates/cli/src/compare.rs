//! Side-by-side comparison of aggregate metric files.
//!
//! The first file is the baseline. For every class, each metric is averaged
//! over the file's windows and the others are reported as a delta and a
//! ratio against it. Files that carry a sibling manifest are also checked
//! for matching config fingerprints and seeds.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use dscd_core::metrics::mean_present;
use dscd_core::traffic::TrafficClass;
use serde::Serialize;

use crate::artifacts::{parse_csv, MetricRecord, RunManifest, MANIFEST_FILE};
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsFile {
    pub path: PathBuf,
    pub records: Vec<MetricRecord>,
    pub manifest: Option<RunManifest>,
}

impl MetricsFile {
    pub fn label(&self) -> String {
        let mode = self
            .manifest
            .as_ref()
            .map(|m| m.mode.label().to_string())
            .or_else(|| self.records.first().map(|r| r.mode.clone()))
            .unwrap_or_else(|| "?".into());
        format!("{mode} ({})", self.path.display())
    }

    /// Mean over windows of one metric for one class; absent if no window
    /// has a value.
    pub fn mean(&self, class: &str, metric: usize) -> Option<f64> {
        mean_present(
            self.records
                .iter()
                .filter(|r| r.class == class)
                .map(|r| r.metrics()[metric].1),
        )
    }
}

/// Reads a CSV or JSON metrics file (by extension) and the manifest next
/// to it, if any.
pub fn load(path: &Path) -> Result<MetricsFile, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("cannot read {}", path.display()), e))?;
    let records = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?,
        _ => parse_csv(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?,
    };
    let manifest_path = path.parent().unwrap_or(Path::new(".")).join(MANIFEST_FILE);
    let manifest = match std::fs::read_to_string(&manifest_path) {
        Ok(t) => Some(
            serde_json::from_str(&t).map_err(|e| CliError::Input(format!("{}: {e}", manifest_path.display())))?,
        ),
        Err(_) => None,
    };
    Ok(MetricsFile {
        path: path.to_path_buf(),
        records,
        manifest,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricDelta {
    pub class: String,
    pub metric: &'static str,
    pub base: Option<f64>,
    pub other: Option<f64>,
    pub delta: Option<f64>,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileComparison {
    pub file: String,
    pub deltas: Vec<MetricDelta>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub base: String,
    pub others: Vec<FileComparison>,
    /// Some pair of files was produced from different configs (mode and
    /// seed aside).
    pub fingerprint_mismatch: bool,
    pub seed_mismatch: bool,
    /// Files without a manifest could not be checked.
    pub unchecked: Vec<String>,
}

impl Comparison {
    pub fn has_warnings(&self) -> bool {
        self.fingerprint_mismatch || self.seed_mismatch || !self.unchecked.is_empty()
    }
}

pub fn compare(files: &[MetricsFile]) -> Result<Comparison, CliError> {
    if files.len() < 2 {
        return Err(CliError::Input("compare needs at least two files".into()));
    }
    let base = &files[0];
    let manifests: Vec<&RunManifest> = files.iter().filter_map(|f| f.manifest.as_ref()).collect();
    let fingerprint_mismatch = manifests.windows(2).any(|w| w[0].fingerprint != w[1].fingerprint);
    let seed_mismatch = manifests.windows(2).any(|w| w[0].seed != w[1].seed);
    let unchecked = files
        .iter()
        .filter(|f| f.manifest.is_none())
        .map(|f| f.path.display().to_string())
        .collect();

    let others = files[1..]
        .iter()
        .map(|f| {
            let mut deltas = Vec::new();
            for class in TrafficClass::ALL.map(TrafficClass::label) {
                for (mi, name) in ["mean_hol_ms", "pdr", "throughput_kbps", "du_ratio", "cu_ratio"]
                    .into_iter()
                    .enumerate()
                {
                    let b = base.mean(class, mi);
                    let o = f.mean(class, mi);
                    let (delta, ratio) = match (b, o) {
                        (Some(b), Some(o)) => (Some(o - b), (b != 0.0).then(|| o / b)),
                        _ => (None, None),
                    };
                    deltas.push(MetricDelta {
                        class: class.to_string(),
                        metric: name,
                        base: b,
                        other: o,
                        delta,
                        ratio,
                    });
                }
            }
            FileComparison {
                file: f.label(),
                deltas,
            }
        })
        .collect();

    Ok(Comparison {
        base: base.label(),
        others,
        fingerprint_mismatch,
        seed_mismatch,
        unchecked,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into())
}

pub fn render_table(c: &Comparison) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "baseline: {}", c.base);
    if c.fingerprint_mismatch {
        let _ = writeln!(out, "WARNING: config fingerprints differ");
    }
    if c.seed_mismatch {
        let _ = writeln!(out, "WARNING: seeds differ");
    }
    for u in &c.unchecked {
        let _ = writeln!(out, "WARNING: no manifest next to {u}; config not checked");
    }
    for f in &c.others {
        let _ = writeln!(out, "\nvs {}", f.file);
        let _ = writeln!(
            out,
            "{:<6} {:<16} {:>14} {:>14} {:>14} {:>10}",
            "class", "metric", "base", "other", "delta", "ratio"
        );
        for d in &f.deltas {
            let _ = writeln!(
                out,
                "{:<6} {:<16} {:>14} {:>14} {:>14} {:>10}",
                d.class,
                d.metric,
                cell(d.base),
                cell(d.other),
                cell(d.delta),
                cell(d.ratio)
            );
        }
    }
    out
}
