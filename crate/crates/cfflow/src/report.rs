//! Run outputs: `metrics.csv` (deterministic), `summary.txt` (with
//! wall-clock times) and `manifest.json`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use cfflow_core::eval::EvalReport;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{hex, ExperimentConfig, Stage};
use crate::error::{Error, Result};
use crate::io::{fmt_f64, write_text};

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug)]
pub struct StageReport {
    pub stage: Stage,
    pub metrics: EvalReport,
    pub runtime_secs: f64,
}

/// `stage,metric,value,std`; an absent spread is an empty field.
pub fn metrics_csv(reports: &[StageReport]) -> String {
    let mut s = String::from("stage,metric,value,std\n");
    for r in reports {
        for m in &r.metrics.records {
            let std = m.std.map(fmt_f64).unwrap_or_default();
            let _ = writeln!(s, "{},{},{},{}", r.stage.name(), m.metric, fmt_f64(m.value), std);
        }
    }
    s
}

pub fn summary_text(cfg: &ExperimentConfig, reports: &[StageReport]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "seed: {}", cfg.seed);
    let _ = writeln!(s, "config_hash: {}", cfg.hash());
    for r in reports {
        let _ = writeln!(s, "\n[{}]  runtime {:.3} s", r.stage.name(), r.runtime_secs);
        for m in &r.metrics.records {
            match m.std {
                Some(sd) => {
                    let _ = writeln!(s, "  {:<28} {:>14.6} ± {:.6}", m.metric, m.value, sd);
                }
                None => {
                    let _ = writeln!(s, "  {:<28} {:>14.6}", m.metric, m.value);
                }
            }
        }
    }
    s
}

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub stages: Vec<&'static str>,
    /// Stages that produced metrics.
    pub reports: Vec<&'static str>,
    pub inputs: Vec<FileEntry>,
    /// Paths relative to the output directory.
    pub outputs: Vec<FileEntry>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn entries(paths: &[PathBuf], base: Option<&Path>) -> Result<Vec<FileEntry>> {
    let mut v: Vec<FileEntry> = paths
        .iter()
        .map(|p| {
            let shown = base.and_then(|b| p.strip_prefix(b).ok()).unwrap_or(p);
            Ok(FileEntry {
                path: shown.to_string_lossy().replace('\\', "/"),
                sha256: sha256_file(p)?,
            })
        })
        .collect::<Result<_>>()?;
    v.sort_by(|a, b| a.path.cmp(&b.path));
    v.dedup_by(|a, b| a.path == b.path);
    Ok(v)
}

/// Writes metrics, summary and manifest; `outputs` are the stage artifacts
/// already on disk.
pub fn write_run(cfg: &ExperimentConfig, stages: &[Stage], reports: &[StageReport], inputs: &[PathBuf], outputs: &[PathBuf]) -> Result<PathBuf> {
    let dir = &cfg.output_dir;
    let metrics = dir.join(METRICS_FILE);
    let summary = dir.join(SUMMARY_FILE);
    write_text(&metrics, &metrics_csv(reports))?;
    write_text(&summary, &summary_text(cfg, reports))?;
    let mut outs = outputs.to_vec();
    outs.push(metrics);
    outs.push(summary);
    let manifest = Manifest {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        stages: stages.iter().map(|s| s.name()).collect(),
        reports: reports.iter().filter(|r| !r.metrics.records.is_empty()).map(|r| r.stage.name()).collect(),
        inputs: entries(inputs, None)?,
        outputs: entries(&outs, Some(dir))?,
    };
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    write_text(&path, &(json + "\n"))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_csv_has_no_timing() {
        let mut m = EvalReport::default();
        m.push("tv", 0.25, Some(0.5));
        m.push("count", 3.0, None).runtime_secs = Some(9.0);
        let r = StageReport {
            stage: Stage::EvalTv,
            metrics: m,
            runtime_secs: 12.5,
        };
        let csv = metrics_csv(&[r]);
        assert_eq!(
            csv,
            "stage,metric,value,std\neval-tv,tv,2.5000000000000000e-1,5.0000000000000000e-1\neval-tv,count,3.0000000000000000e0,\n"
        );
    }
}
