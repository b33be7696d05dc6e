//! Result-directory writers.
//!
//! A result directory holds `config.resolved.json`, `run.json` (software
//! version, seeds, per-cell records), `summary.json` and `curves.csv`.
//! Nothing time- or host-dependent is written, so reruns are byte-identical.

use std::fs;
use std::path::Path;

use serde::Serialize;

use super::engine::CurveRecord;
use super::{HarnessError, Result};

pub const CURVE_COLUMNS: [&str; 8] =
    ["contrast", "dprime", "hits", "misses", "falseAlarms", "correctRejections", "detector", "seedReplicate"];

/// One curve block, optionally tagged with extra trailing columns.
pub struct CurveBlock<'a> {
    pub curves: &'a [CurveRecord],
    pub extra: Vec<String>,
}

/// Renders curves as CSV; `extra_columns` names trailing columns carried by
/// every block.
pub fn curves_csv(blocks: &[CurveBlock<'_>], extra_columns: &[&str]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<&str> = CURVE_COLUMNS.iter().chain(extra_columns).copied().collect();
    w.write_record(&header).map_err(csv_err)?;
    for block in blocks {
        assert_eq!(block.extra.len(), extra_columns.len(), "extra column count");
        for rec in block.curves {
            for p in &rec.curve.points {
                let mut row = vec![
                    p.contrast.to_string(),
                    p.dprime.to_string(),
                    p.counts.hits.to_string(),
                    p.counts.misses.to_string(),
                    p.counts.false_alarms.to_string(),
                    p.counts.correct_rejections.to_string(),
                    rec.detector.name().to_string(),
                    rec.replicate.to_string(),
                ];
                row.extend(block.extra.iter().cloned());
                w.write_record(&row).map_err(csv_err)?;
            }
        }
    }
    w.into_inner().map_err(|e| HarnessError::Config(format!("csv buffer: {e}")))
}

fn csv_err(e: csv::Error) -> HarnessError {
    HarnessError::Config(format!("csv: {e}"))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Config(format!("json: {e}")))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}
