//! Metrics CSV, timing CSV and JSON summaries, written temp-then-rename.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::runner::{RoundMetrics, RunSummary};
use crate::error::Result;

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

/// One row per round; deterministic in plain mode.
pub fn metrics_csv(metrics: &[RoundMetrics]) -> String {
    let classes = metrics.first().map_or(0, |m| m.per_class.len());
    let mut out = String::from(
        "epoch,accuracy,aasr,step_norm,mean_rate_benign,mean_rate_malicious,mean_sq_norm_benign,mean_sq_norm_malicious,malicious_in_roster",
    );
    for k in 0..classes {
        let _ = write!(out, ",class_{k}");
    }
    out.push('\n');
    for m in metrics {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            m.epoch,
            m.accuracy,
            m.aasr,
            m.step_norm,
            opt(m.mean_rate(false)),
            opt(m.mean_rate(true)),
            opt(m.mean_sq_norm(false)),
            opt(m.mean_sq_norm(true)),
            m.malicious.iter().filter(|&&b| b).count()
        );
        for a in &m.per_class {
            let _ = write!(out, ",{a}");
        }
        out.push('\n');
    }
    out
}

pub fn timings_csv(metrics: &[RoundMetrics]) -> String {
    let mut out = String::from("epoch,train_ms,aggregate_ms,eval_ms\n");
    for m in metrics {
        let t = m.timings;
        let _ = writeln!(out, "{},{:.3},{:.3},{:.3}", m.epoch, t.train_ms, t.aggregate_ms, t.eval_ms);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateSummary {
    pub seeds: Vec<u64>,
    pub mean_final_accuracy: f64,
    pub mean_aasr: f64,
    pub runs: Vec<RunSummary>,
}

impl AggregateSummary {
    pub fn new(runs: Vec<RunSummary>) -> Self {
        let n = runs.len().max(1) as f64;
        Self {
            seeds: runs.iter().map(|r| r.seed).collect(),
            mean_final_accuracy: runs.iter().map(|r| r.final_accuracy).sum::<f64>() / n,
            mean_aasr: runs.iter().map(|r| r.mean_aasr).sum::<f64>() / n,
            runs,
        }
    }
}
