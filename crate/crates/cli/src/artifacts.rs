//! Metric files and the run manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use dscd_core::config::{Mode, SimConfig};
use dscd_core::metrics::WindowRow;
use dscd_core::sim::BatchOutput;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const CSV_HEADER: &str = "window_start_tti,class,mode,mean_hol_ms,pdr,throughput_kbps,du_ratio,cu_ratio";
pub const MANIFEST_FILE: &str = "manifest.json";

pub const ARTIFACT_VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// One line of a metrics file. Absent metrics are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub window_start_tti: u64,
    pub class: String,
    pub mode: String,
    pub mean_hol_ms: Option<f64>,
    pub pdr: Option<f64>,
    pub throughput_kbps: Option<f64>,
    pub du_ratio: Option<f64>,
    pub cu_ratio: Option<f64>,
}

impl MetricRecord {
    pub fn from_row(row: &WindowRow, mode: Mode) -> Self {
        let m = &row.metrics;
        Self {
            window_start_tti: row.window_start_tti,
            class: m.class.label().to_string(),
            mode: mode.label().to_string(),
            mean_hol_ms: m.mean_hol_ms,
            pdr: m.pdr,
            throughput_kbps: m.throughput_kbps,
            du_ratio: m.du_ratio,
            cu_ratio: m.cu_ratio,
        }
    }

    pub fn metrics(&self) -> [(&'static str, Option<f64>); 5] {
        [
            ("mean_hol_ms", self.mean_hol_ms),
            ("pdr", self.pdr),
            ("throughput_kbps", self.throughput_kbps),
            ("du_ratio", self.du_ratio),
            ("cu_ratio", self.cu_ratio),
        ]
    }
}

fn field(v: Option<f64>) -> String {
    // `Display` for f64 prints the shortest string that parses back exactly.
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn to_csv(records: &[MetricRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.window_start_tti,
            r.class,
            r.mode,
            field(r.mean_hol_ms),
            field(r.pdr),
            field(r.throughput_kbps),
            field(r.du_ratio),
            field(r.cu_ratio)
        );
    }
    out
}

pub fn to_json(records: &[MetricRecord]) -> String {
    let mut s = serde_json::to_string_pretty(records).expect("records serialize");
    s.push('\n');
    s
}

pub fn parse_csv(text: &str) -> Result<Vec<MetricRecord>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        Some(h) => return Err(format!("unexpected header `{h}`")),
        None => return Err("empty file".into()),
    }
    let num = |s: &str, line: usize| -> Result<Option<f64>, String> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|e| format!("line {line}: bad number `{s}`: {e}"))
        }
    };
    let mut out = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let n = i + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(format!("line {n}: expected 8 fields, found {}", f.len()));
        }
        out.push(MetricRecord {
            window_start_tti: f[0].parse().map_err(|e| format!("line {n}: bad window `{}`: {e}", f[0]))?,
            class: f[1].to_string(),
            mode: f[2].to_string(),
            mean_hol_ms: num(f[3], n)?,
            pdr: num(f[4], n)?,
            throughput_kbps: num(f[5], n)?,
            du_ratio: num(f[6], n)?,
            cu_ratio: num(f[7], n)?,
        });
    }
    Ok(out)
}

pub fn render(records: &[MetricRecord], format: Format) -> String {
    match format {
        Format::Csv => to_csv(records),
        Format::Json => to_json(records),
    }
}

pub fn records(rows: &[WindowRow], mode: Mode) -> Vec<MetricRecord> {
    rows.iter().map(|r| MetricRecord::from_row(r, mode)).collect()
}

/// Hash of the resolved config with `mode` and `seed` neutralized, so runs
/// that differ only in those share a fingerprint.
pub fn fingerprint(cfg: &SimConfig) -> String {
    let mut c = cfg.clone();
    c.mode = Mode::Dscd;
    c.seed = 0;
    let digest = Sha256::digest(c.to_toml().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub mode: Mode,
    pub seed: u64,
    pub runs: usize,
    pub fingerprint: String,
    pub format: Format,
    pub wall_clock_s: f64,
    /// Fully resolved config as TOML; feeding it back reproduces the run.
    pub config: String,
    pub files: Vec<String>,
}

impl RunManifest {
    pub fn resolved_config(&self) -> Result<SimConfig, dscd_core::ConfigError> {
        SimConfig::from_toml(&self.config)
    }
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(format!("cannot write {}", path.display()), e))
}

pub fn run_file_name(index: usize, format: Format) -> String {
    format!("run-{index:03}.{}", format.extension())
}

pub fn aggregate_file_name(format: Format) -> String {
    format!("aggregate.{}", format.extension())
}

/// Writes the manifest, then one time series per run, the cross-run
/// aggregate, and the trailing-window summary. Returns every path written.
pub fn emit_metrics(
    batch: &BatchOutput,
    cfg: &SimConfig,
    format: Format,
    out_dir: &Path,
    wall_clock_s: f64,
) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::io(format!("cannot create {}", out_dir.display()), e))?;
    let mut files: Vec<String> = batch.runs.iter().map(|r| run_file_name(r.index, format)).collect();
    files.push(aggregate_file_name(format));
    files.push("summary.json".into());

    let manifest = RunManifest {
        version: ARTIFACT_VERSION.to_string(),
        mode: cfg.mode,
        seed: cfg.seed,
        runs: cfg.runs,
        fingerprint: fingerprint(cfg),
        format,
        wall_clock_s,
        config: cfg.to_toml(),
        files: files.clone(),
    };
    let manifest_path = out_dir.join(MANIFEST_FILE);
    write(
        &manifest_path,
        &(serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n"),
    )?;

    let mut written = vec![manifest_path];
    for run in &batch.runs {
        let path = out_dir.join(run_file_name(run.index, format));
        let rows = dscd_core::metrics::window_rows(&run.ledger);
        write(&path, &render(&records(&rows, cfg.mode), format))?;
        written.push(path);
    }
    let path = out_dir.join(aggregate_file_name(format));
    write(&path, &render(&records(&batch.aggregate, cfg.mode), format))?;
    written.push(path);
    let path = out_dir.join("summary.json");
    write(
        &path,
        &(serde_json::to_string_pretty(&batch.summary).expect("summary serializes") + "\n"),
    )?;
    written.push(path);
    Ok(written)
}
