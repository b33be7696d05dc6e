//! Experiment configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{HarnessError, Result};
use crate::metrics::CRITERION_DPRIME;
use crate::optics::CameraConfig;
use crate::stimulus::{
    block_scramble, load_contrast_image, make_automaton, make_disk, make_gabor, make_harmonic, make_synthetic_face,
    AutomatonSpec, Boundary, ContrastPattern, HARMONIC_STD,
};
use crate::svm::SvmParams;

fn default_target_std() -> f64 {
    HARMONIC_STD
}

fn default_seed() -> u64 {
    1
}

/// One of the pattern generators with its parameters. Grid dimensions come
/// from the context (camera pattern grid, or the multi-location patch size).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", deny_unknown_fields)]
pub enum StimulusSpec {
    #[serde(rename_all = "camelCase")]
    Harmonic {
        freq: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        orientation: f64,
    },
    #[serde(rename_all = "camelCase")]
    Gabor {
        freq: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        orientation: f64,
        sigma: f64,
    },
    #[serde(rename_all = "camelCase")]
    Disk { radius: f64 },
    #[serde(rename_all = "camelCase")]
    Image {
        path: PathBuf,
        #[serde(default = "default_target_std")]
        target_std: f64,
    },
    #[serde(rename_all = "camelCase")]
    SyntheticFace {
        #[serde(default)]
        variant: u64,
        #[serde(default = "default_target_std")]
        target_std: f64,
    },
    /// Elementary cellular automaton filling the whole grid. The first row is
    /// random bits from `seed` unless `singleCell` is set.
    #[serde(rename_all = "camelCase")]
    Automaton {
        rule: u32,
        #[serde(default = "default_seed")]
        seed: u64,
        #[serde(default)]
        single_cell: bool,
        #[serde(default)]
        boundary: Boundary,
        #[serde(default = "default_target_std")]
        target_std: f64,
    },
    /// Block-scrambled version of another stimulus.
    #[serde(rename_all = "camelCase")]
    Scrambled {
        base: Box<StimulusSpec>,
        block_size: usize,
        #[serde(default = "default_seed")]
        seed: u64,
    },
}

impl StimulusSpec {
    pub fn build(&self, width: usize, height: usize) -> Result<ContrastPattern> {
        let p = match self {
            Self::Harmonic { freq, phase, orientation } => make_harmonic(*freq, *phase, *orientation, width, height)?,
            Self::Gabor { freq, phase, orientation, sigma } => {
                make_gabor(*freq, *phase, *orientation, *sigma, width, height)?
            }
            Self::Disk { radius } => make_disk(*radius, width, height)?,
            Self::Image { path, target_std } => {
                let p = load_contrast_image(path, *target_std)?;
                if p.width() != width || p.height() != height {
                    return Err(HarnessError::Config(format!(
                        "image {} is {}x{}, the pattern grid is {width}x{height}",
                        path.display(),
                        p.width(),
                        p.height()
                    )));
                }
                p
            }
            Self::SyntheticFace { variant, target_std } => make_synthetic_face(*variant, width, height, *target_std)?,
            Self::Automaton { rule, seed, single_cell, boundary, target_std } => {
                let spec = if *single_cell {
                    AutomatonSpec::with_single_cell(*rule, height, width, *boundary)?
                } else {
                    AutomatonSpec::with_random_row(*rule, height, width, *seed, *boundary)?
                };
                make_automaton(&spec, *target_std)?
            }
            Self::Scrambled { base, block_size, seed } => block_scramble(&base.build(width, height)?, *block_size, *seed)?,
        };
        Ok(p)
    }

    /// Relative image paths are taken relative to `dir`.
    pub fn resolve_paths(&mut self, dir: &Path) {
        match self {
            Self::Image { path, .. } if path.is_relative() => *path = dir.join(&*path),
            Self::Scrambled { base, .. } => base.resolve_paths(dir),
            _ => {}
        }
    }
}

/// Either an explicit list of contrasts or a log-spaced range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ContrastGrid {
    Explicit(Vec<f64>),
    #[serde(rename_all = "camelCase")]
    LogSpaced {
        min: f64,
        max: f64,
        #[serde(default = "default_points_per_decade")]
        points_per_decade: usize,
    },
}

fn default_points_per_decade() -> usize {
    12
}

impl Default for ContrastGrid {
    fn default() -> Self {
        Self::LogSpaced { min: 1e-3, max: 1e-1, points_per_decade: default_points_per_decade() }
    }
}

impl ContrastGrid {
    pub fn points(&self) -> Result<Vec<f64>> {
        let pts = match self {
            Self::Explicit(v) => v.clone(),
            Self::LogSpaced { min, max, points_per_decade } => {
                if !(*min > 0.0 && max >= min && *points_per_decade > 0) {
                    return Err(HarnessError::Config(format!(
                        "log-spaced grid needs 0 < min <= max and pointsPerDecade >= 1 (got {min}, {max}, {points_per_decade})"
                    )));
                }
                let start = min.log10();
                let steps = ((max.log10() - start) * *points_per_decade as f64 + 1e-9).floor() as usize;
                (0..=steps).map(|i| 10f64.powf(start + i as f64 / *points_per_decade as f64)).collect()
            }
        };
        if pts.is_empty() {
            return Err(HarnessError::Config("contrast grid is empty".into()));
        }
        if pts.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(HarnessError::Config("contrasts must be finite and non-negative".into()));
        }
        if pts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(HarnessError::Config("contrast grid must be strictly increasing".into()));
        }
        Ok(pts)
    }

    pub fn points_per_decade(&self) -> usize {
        match self {
            Self::LogSpaced { points_per_decade, .. } => *points_per_decade,
            Self::Explicit(_) => default_points_per_decade(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Detector {
    Io,
    Svm,
    Cnn,
}

impl Detector {
    pub fn name(self) -> &'static str {
        match self {
            Self::Io => "io",
            Self::Svm => "svm",
            Self::Cnn => "cnn",
        }
    }
}

/// SVM solver settings. The coordinate-order seed is derived per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct SvmSettings {
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvmSettings {
    fn default() -> Self {
        let p = SvmParams::default();
        Self { c: p.c, tol: p.tol, max_iter: p.max_iter }
    }
}

impl SvmSettings {
    pub fn params(&self, seed: u64) -> SvmParams {
        SvmParams { c: self.c, tol: self.tol, max_iter: self.max_iter, seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ExperimentConfig {
    pub stimulus: StimulusSpec,
    #[serde(default)]
    pub camera: CameraConfig,
    #[serde(default)]
    pub contrast_grid: ContrastGrid,
    /// Test trials per class at each contrast.
    #[serde(default = "defaults::trials_per_class")]
    pub trials_per_class: usize,
    /// SVM training samples per contrast, half of them signal.
    #[serde(default = "defaults::train_count")]
    pub train_count: usize,
    #[serde(default = "defaults::detectors")]
    pub detectors: Vec<Detector>,
    #[serde(default = "defaults::replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Worker threads; 0 uses every available core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default = "defaults::target_dprime")]
    pub target_dprime: f64,
    /// One-decade grid extensions allowed while a threshold is not bracketed.
    #[serde(default = "defaults::max_extensions")]
    pub max_extensions: usize,
    /// Extensions never add contrasts above this.
    #[serde(default = "defaults::max_contrast")]
    pub max_contrast: f64,
    /// Ideal-observer prior probability that a signal is present.
    #[serde(default = "defaults::signal_prior")]
    pub signal_prior: f64,
    #[serde(default)]
    pub svm: SvmSettings,
}

pub(crate) mod defaults {
    use super::Detector;

    pub fn trials_per_class() -> usize {
        5000
    }
    pub fn train_count() -> usize {
        10_000
    }
    pub fn detectors() -> Vec<Detector> {
        vec![Detector::Io, Detector::Svm]
    }
    pub fn replicates() -> usize {
        5
    }
    pub fn target_dprime() -> f64 {
        super::CRITERION_DPRIME
    }
    pub fn max_extensions() -> usize {
        3
    }
    pub fn max_contrast() -> f64 {
        10.0
    }
    pub fn signal_prior() -> f64 {
        0.5
    }
}

impl ExperimentConfig {
    pub fn new(stimulus: StimulusSpec) -> Self {
        Self {
            stimulus,
            camera: CameraConfig::default(),
            contrast_grid: ContrastGrid::default(),
            trials_per_class: defaults::trials_per_class(),
            train_count: defaults::train_count(),
            detectors: defaults::detectors(),
            replicates: defaults::replicates(),
            base_seed: 0,
            workers: 0,
            target_dprime: defaults::target_dprime(),
            max_extensions: defaults::max_extensions(),
            max_contrast: defaults::max_contrast(),
            signal_prior: defaults::signal_prior(),
            svm: SvmSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        self.contrast_grid.points()?;
        if self.replicates == 0 {
            return Err(HarnessError::Config("replicates must be at least 1".into()));
        }
        if self.trials_per_class == 0 {
            return Err(HarnessError::Config("trialsPerClass must be at least 1".into()));
        }
        if self.detectors.is_empty() {
            return Err(HarnessError::Config("no detectors selected".into()));
        }
        if self.detectors.contains(&Detector::Cnn) {
            return Err(HarnessError::UnsupportedDetector(
                "the cnn detector runs out of process: use export-dataset, then score its predictions".into(),
            ));
        }
        if self.detectors.contains(&Detector::Svm) && (self.train_count < 2 || !self.train_count.is_multiple_of(2)) {
            return Err(HarnessError::Config("trainCount must be even and at least 2".into()));
        }
        if !(self.signal_prior > 0.0 && self.signal_prior < 1.0) {
            return Err(HarnessError::Config("signalPrior must lie in (0, 1)".into()));
        }
        if !(self.max_contrast > 0.0) {
            return Err(HarnessError::Config("maxContrast must be positive".into()));
        }
        if !(self.target_dprime.is_finite()) {
            return Err(HarnessError::Config("targetDprime must be finite".into()));
        }
        if !(self.svm.c > 0.0 && self.svm.tol > 0.0 && self.svm.max_iter > 0) {
            return Err(HarnessError::Config("svm needs c > 0, tol > 0 and maxIter >= 1".into()));
        }
        Ok(())
    }

    pub fn uses(&self, d: Detector) -> bool {
        self.detectors.contains(&d)
    }

    /// Sorted, de-duplicated detector list.
    pub(crate) fn detector_list(&self) -> Vec<Detector> {
        let mut d = self.detectors.clone();
        d.sort();
        d.dedup();
        d
    }
}

/// Reads a JSON config; relative image paths resolve against its directory.
pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}

pub fn load_experiment(path: &Path) -> Result<ExperimentConfig> {
    let mut cfg: ExperimentConfig = read_json(path)?;
    if let Some(dir) = path.parent() {
        cfg.stimulus.resolve_paths(dir);
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"stimulus": {"kind": "harmonic", "freq": 1}}"#).unwrap();
        assert_eq!(cfg.trials_per_class, 5000);
        assert_eq!(cfg.train_count, 10_000);
        assert_eq!(cfg.replicates, 5);
        assert_eq!(cfg.detectors, vec![Detector::Io, Detector::Svm]);
        assert_eq!(cfg.camera, CameraConfig::default());
        assert_eq!(cfg.target_dprime, 1.5);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let r: std::result::Result<ExperimentConfig, _> =
            serde_json::from_str(r#"{"stimulus": {"kind": "disk", "radius": 3}, "trials": 5}"#);
        assert!(r.is_err());
    }

    #[test]
    fn grids_parse_in_both_forms() {
        let g: ContrastGrid = serde_json::from_str("[0.01, 0.02]").unwrap();
        assert_eq!(g.points().unwrap(), vec![0.01, 0.02]);
        let g: ContrastGrid = serde_json::from_str(r#"{"min": 0.001, "max": 0.01, "pointsPerDecade": 4}"#).unwrap();
        let p = g.points().unwrap();
        assert_eq!(p.len(), 5);
        assert!((p[4] - 0.01).abs() < 1e-15);
        assert!((p[1] / p[0] - 10f64.powf(0.25)).abs() < 1e-12);
        assert!(ContrastGrid::Explicit(vec![0.02, 0.01]).points().is_err());
        assert!(ContrastGrid::Explicit(vec![]).points().is_err());
    }

    #[test]
    fn cnn_detector_is_rejected_in_process() {
        let mut cfg = ExperimentConfig::new(StimulusSpec::Disk { radius: 4.0 });
        cfg.detectors = vec![Detector::Io, Detector::Cnn];
        assert!(matches!(cfg.validate(), Err(HarnessError::UnsupportedDetector(_))));
    }

    #[test]
    fn stimulus_specs_round_trip_and_build() {
        let spec = StimulusSpec::Scrambled {
            base: Box::new(StimulusSpec::Harmonic { freq: 1.0, phase: 0.0, orientation: 0.0 }),
            block_size: 4,
            seed: 3,
        };
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<StimulusSpec>(&json).unwrap(), spec);
        let p = spec.build(16, 16).unwrap();
        assert_eq!(p.len(), 256);
        let ca: StimulusSpec = serde_json::from_str(r#"{"kind": "automaton", "rule": 30}"#).unwrap();
        assert!(ca.build(32, 32).is_ok());
        let face: StimulusSpec = serde_json::from_str(r#"{"kind": "syntheticFace"}"#).unwrap();
        assert!((face.build(40, 40).unwrap().std() - HARMONIC_STD).abs() < 1e-9);
    }
}
