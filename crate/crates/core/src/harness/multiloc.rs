//! Location-uncertainty experiments: the same patch may appear at any one of
//! N candidate positions, and detectors must say whether it is present.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{read_json, Detector, ExperimentConfig, StimulusSpec};
use super::engine::{mean_std, replicate_seed, run_grid, summarize, CellRecord, CellSetup, CurveRecord, DetectorSummary};
use super::output::{curves_csv, ensure_dir, write_bytes, write_json, CurveBlock};
use super::{software, with_workers, HarnessError, Result, SoftwareInfo};
use crate::optics::{Mapping, OpticalImage};
use crate::stimulus::{place_at_location, MultiLocationLayout};

/// Default patch: a Gabor with 4 cycles across a 32-pixel patch and σ = 6 pixels.
pub const DEFAULT_PATCH_SIZE: usize = 32;

pub fn default_gabor_patch() -> StimulusSpec {
    StimulusSpec::Gabor { freq: 4.0, phase: 0.0, orientation: 0.0, sigma: 6.0 }
}

fn default_patch_size() -> usize {
    DEFAULT_PATCH_SIZE
}

fn default_location_counts() -> Vec<usize> {
    vec![1, 2, 4, 8, 16]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct MultiLocationConfig {
    /// Shared experiment settings; `stimulus` describes the patch and is
    /// generated on a `patchWidth x patchHeight` grid.
    pub experiment: ExperimentConfig,
    #[serde(default = "default_patch_size")]
    pub patch_width: usize,
    #[serde(default = "default_patch_size")]
    pub patch_height: usize,
    #[serde(default = "default_location_counts")]
    pub location_counts: Vec<usize>,
    /// Explicit layouts replacing the default grids, matched to
    /// `locationCounts` by their number of locations.
    #[serde(default)]
    pub layouts: Vec<MultiLocationLayout>,
}

impl MultiLocationConfig {
    pub fn new(experiment: ExperimentConfig) -> Self {
        Self {
            experiment,
            patch_width: DEFAULT_PATCH_SIZE,
            patch_height: DEFAULT_PATCH_SIZE,
            location_counts: default_location_counts(),
            layouts: Vec::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: Self = read_json(path)?;
        if let Some(dir) = path.parent() {
            cfg.experiment.stimulus.resolve_paths(dir);
        }
        Ok(cfg)
    }

    /// Layout for `n` locations: an explicit one if given, else an evenly
    /// spaced grid over the pattern field.
    pub fn layout(&self, n: usize) -> Result<MultiLocationLayout> {
        if let Some(l) = self.layouts.iter().find(|l| l.len() == n) {
            let (w, h) = self.experiment.camera.pattern_dims();
            if (l.width, l.height) != (w, h) {
                return Err(HarnessError::Config(format!(
                    "layout is {}x{}, the pattern grid is {w}x{h}",
                    l.width, l.height
                )));
            }
            l.validate()?;
            return Ok(l.clone());
        }
        let (w, h) = self.experiment.camera.pattern_dims();
        Ok(MultiLocationLayout::grid(w, h, self.patch_width, self.patch_height, n)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.experiment.validate()?;
        if self.location_counts.is_empty() || self.location_counts.contains(&0) {
            return Err(HarnessError::Config("locationCounts must be non-empty and positive".into()));
        }
        if self.experiment.camera.mapping != Mapping::OneToOne {
            return Err(HarnessError::Config("multi-location runs need oneToOne mapping".into()));
        }
        for &n in &self.location_counts {
            self.layout(n)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LocationRun {
    pub locations: usize,
    pub layout: MultiLocationLayout,
    pub contrasts: Vec<f64>,
    pub grid_extensions: usize,
    pub curves: Vec<CurveRecord>,
    pub summary: Vec<DetectorSummary>,
    /// Mean ideal-observer localization accuracy over the evaluated cells.
    pub io_localization_accuracy: Option<f64>,
    pub cells: Vec<CellRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SensitivityRatio {
    pub detector: Detector,
    pub locations: usize,
    /// Mean sensitivity at `locations` divided by mean sensitivity at the
    /// smallest location count.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MultiLocationReport {
    pub config: MultiLocationConfig,
    pub software: SoftwareInfo,
    pub replicate_seeds: Vec<u64>,
    pub runs: Vec<LocationRun>,
    pub ratios: Vec<SensitivityRatio>,
}

impl MultiLocationReport {
    pub fn run_for(&self, n: usize) -> Option<&LocationRun> {
        self.runs.iter().find(|r| r.locations == n)
    }

    pub fn ratio(&self, detector: Detector, n: usize) -> Option<f64> {
        self.ratios.iter().find(|r| r.detector == detector && r.locations == n).and_then(|r| r.ratio)
    }

    pub fn csv(&self) -> Result<Vec<u8>> {
        let blocks: Vec<CurveBlock<'_>> =
            self.runs.iter().map(|r| CurveBlock { curves: &r.curves, extra: vec![r.locations.to_string()] }).collect();
        curves_csv(&blocks, &["locations"])
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        ensure_dir(dir)?;
        write_json(&dir.join("config.resolved.json"), &self.config)?;
        write_json(&dir.join("run.json"), &RunFile { software: &self.software, replicate_seeds: &self.replicate_seeds, runs: &self.runs })?;
        write_json(
            &dir.join("summary.json"),
            &SummaryFile {
                target_dprime: self.config.experiment.target_dprime,
                by_location_count: self
                    .runs
                    .iter()
                    .map(|r| LocationSummary {
                        locations: r.locations,
                        detectors: &r.summary,
                        io_localization_accuracy: r.io_localization_accuracy,
                    })
                    .collect(),
                ratios: &self.ratios,
            },
        )?;
        write_bytes(&dir.join("curves.csv"), &self.csv()?)
    }
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct RunFile<'a> {
    software: &'a SoftwareInfo,
    replicate_seeds: &'a [u64],
    runs: &'a [LocationRun],
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct LocationSummary<'a> {
    locations: usize,
    detectors: &'a [DetectorSummary],
    io_localization_accuracy: Option<f64>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct SummaryFile<'a> {
    target_dprime: f64,
    by_location_count: Vec<LocationSummary<'a>>,
    ratios: &'a [SensitivityRatio],
}

/// Runs one contrast sweep per location count.
///
/// Test and training seeds depend only on the replicate and the contrast, so
/// noise trials are shared across location counts, and a one-location run
/// with a full-field layout reproduces [`run_sweep`](super::run_sweep) exactly.
pub fn run_multi_location(config: &MultiLocationConfig) -> Result<MultiLocationReport> {
    config.validate()?;
    let exp = &config.experiment;
    let mut counts = config.location_counts.clone();
    counts.sort_unstable();
    counts.dedup();

    let mut runs = Vec::new();
    for &n in &counts {
        let layout = config.layout(n)?;
        let patch = exp.stimulus.build(layout.patch_width, layout.patch_height)?;
        let signals: Vec<OpticalImage> = (0..n)
            .map(|i| Ok(OpticalImage::new(&place_at_location(&patch, &layout, i)?, &exp.camera)?))
            .collect::<Result<_>>()?;
        let setup = CellSetup { config: exp, signals: &signals };
        let grid = with_workers(exp.workers, || run_grid(&setup))??;
        let acc: Vec<f64> = grid.cells.iter().filter_map(|c| c.localization_accuracy).collect();
        runs.push(LocationRun {
            locations: n,
            layout,
            contrasts: grid.contrasts,
            grid_extensions: grid.extensions,
            summary: summarize(&grid.curves, &exp.detector_list(), exp.target_dprime),
            curves: grid.curves,
            io_localization_accuracy: mean_std(&acc).0,
            cells: grid.cells,
        });
    }

    let base = &runs[0];
    let mut ratios = Vec::new();
    for d in exp.detector_list() {
        let reference = base.summary.iter().find(|s| s.detector == d).and_then(|s| s.sensitivity_mean);
        for r in &runs {
            let mean = r.summary.iter().find(|s| s.detector == d).and_then(|s| s.sensitivity_mean);
            let ratio = match (mean, reference) {
                (Some(m), Some(b)) => Some(m / b),
                _ => None,
            };
            ratios.push(SensitivityRatio { detector: d, locations: r.locations, ratio });
        }
    }

    Ok(MultiLocationReport {
        config: config.clone(),
        software: software(),
        replicate_seeds: (0..exp.replicates).map(|r| replicate_seed(exp.base_seed, r)).collect(),
        runs,
        ratios,
    })
}
