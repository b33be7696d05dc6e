//! Contrast sweeps for a single, fixed-location stimulus.

use std::path::Path;

use serde::Serialize;

use super::config::ExperimentConfig;
use super::engine::{replicate_seed, run_grid, summarize, CellRecord, CellSetup, CurveRecord, DetectorSummary};
use super::output::{curves_csv, ensure_dir, write_bytes, write_json, CurveBlock};
use super::{software, with_workers, Result, SoftwareInfo};
use crate::optics::OpticalImage;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RunInfo {
    pub software: SoftwareInfo,
    pub base_seed: u64,
    pub replicate_seeds: Vec<u64>,
    /// Contrasts actually evaluated, including any upward extensions.
    pub contrasts: Vec<f64>,
    pub grid_extensions: usize,
    /// SVM features are photon counts times this factor.
    pub svm_feature_scale: f64,
    pub cells: Vec<CellRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SweepReport {
    pub config: ExperimentConfig,
    pub run: RunInfo,
    pub curves: Vec<CurveRecord>,
    pub summary: Vec<DetectorSummary>,
}

impl SweepReport {
    pub fn curve(&self, detector: super::Detector, replicate: usize) -> Option<&CurveRecord> {
        self.curves.iter().find(|c| c.detector == detector && c.replicate == replicate)
    }

    pub fn summary_for(&self, detector: super::Detector) -> Option<&DetectorSummary> {
        self.summary.iter().find(|s| s.detector == detector)
    }

    pub fn csv(&self) -> Result<Vec<u8>> {
        curves_csv(&[CurveBlock { curves: &self.curves, extra: vec![] }], &[])
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        ensure_dir(dir)?;
        write_json(&dir.join("config.resolved.json"), &self.config)?;
        write_json(&dir.join("run.json"), &self.run)?;
        write_json(&dir.join("summary.json"), &SummaryFile { target_dprime: self.config.target_dprime, detectors: &self.summary })?;
        write_bytes(&dir.join("curves.csv"), &self.csv()?)
    }
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct SummaryFile<'a> {
    target_dprime: f64,
    detectors: &'a [DetectorSummary],
}

/// Runs every replicate of the sweep on `config.workers` threads.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepReport> {
    config.validate()?;
    let (w, h) = config.camera.pattern_dims();
    let pattern = config.stimulus.build(w, h)?;
    let optical = OpticalImage::new(&pattern, &config.camera)?;
    let signals = [optical];
    let setup = CellSetup { config, signals: &signals };
    let grid = with_workers(config.workers, || run_grid(&setup))??;
    let detectors = config.detector_list();
    Ok(SweepReport {
        config: config.clone(),
        run: RunInfo {
            software: software(),
            base_seed: config.base_seed,
            replicate_seeds: (0..config.replicates).map(|r| replicate_seed(config.base_seed, r)).collect(),
            contrasts: grid.contrasts,
            grid_extensions: grid.extensions,
            svm_feature_scale: 1.0 / config.camera.mean_level,
            cells: grid.cells,
        },
        summary: summarize(&grid.curves, &detectors, config.target_dprime),
        curves: grid.curves,
    })
}
