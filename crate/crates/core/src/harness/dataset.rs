//! Raw-tensor datasets for out-of-process classifiers, and scoring of the
//! label files they write back.
//!
//! A dataset directory holds `manifest.json` plus, per split, an image file
//! of little-endian `u16` photon counts (sample-major, then row-major pixels)
//! and a label file with one `u8` per sample (0 = noise, 1 = signal).

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{read_json, StimulusSpec};
use super::engine::is_signal_trial;
use super::output::{ensure_dir, write_json};
use super::{software, HarnessError, Result};
use crate::metrics::{analytic_d_prime, corrected_rates, d_prime, ConfusionCounts};
use crate::optics::{CameraConfig, OpticalImage, Scene};
use crate::seed::{derive_seed, purpose};
use crate::sensor::{sample, SensorSample};

pub const DATASET_FORMAT: &str = "photon-detect-dataset";
pub const DATASET_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
const CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct DatasetConfig {
    pub stimulus: StimulusSpec,
    #[serde(default)]
    pub camera: CameraConfig,
    pub contrast: f64,
    pub train_count: usize,
    pub test_count: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Worker threads; 0 uses every available core.
    #[serde(default)]
    pub workers: usize,
}

impl DatasetConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: Self = read_json(path)?;
        if let Some(dir) = path.parent() {
            cfg.stimulus.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        if !(self.contrast >= 0.0 && self.contrast.is_finite()) {
            return Err(HarnessError::Config(format!("contrast must be finite and non-negative, got {}", self.contrast)));
        }
        if !self.train_count.is_multiple_of(2) || !self.test_count.is_multiple_of(2) || self.test_count == 0 {
            return Err(HarnessError::Config("trainCount and testCount must be even, testCount at least 2".into()));
        }
        Ok(())
    }

    pub fn stream_seed(&self) -> u64 {
        derive_seed(self.base_seed, &[purpose::DATASET])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SplitInfo {
    pub sample_count: usize,
    pub signal_count: usize,
    /// Trial ids run from `trialIdStart` to `trialIdStart + sampleCount - 1`.
    pub trial_id_start: u64,
    pub images_file: String,
    pub labels_file: String,
    pub image_bytes: u64,
    pub label_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Splits {
    pub train: SplitInfo,
    pub test: SplitInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SceneStats {
    pub noise_mean: f64,
    pub signal_mean: f64,
    pub signal_min: f64,
    pub signal_max: f64,
    pub clamped_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Seeds {
    pub base_seed: u64,
    pub stream_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Software {
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DatasetManifest {
    pub format: String,
    pub version: u32,
    pub software: Software,
    pub stimulus: StimulusSpec,
    pub camera: CameraConfig,
    pub contrast: f64,
    /// Class names indexed by label value.
    pub classes: Vec<String>,
    pub width: usize,
    pub height: usize,
    pub image_encoding: String,
    pub label_encoding: String,
    pub seeds: Seeds,
    pub splits: Splits,
    pub scene_stats: SceneStats,
    pub analytic_dprime: f64,
}

impl DatasetManifest {
    /// Accepts the manifest file or the directory containing it.
    pub fn read(path: &Path) -> Result<(Self, PathBuf)> {
        let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let m: Self = read_json(&file)?;
        if m.format != DATASET_FORMAT || m.version != DATASET_VERSION {
            return Err(HarnessError::Dataset(format!("unsupported dataset {} v{}", m.format, m.version)));
        }
        let dir = file.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((m, dir))
    }

    /// The configuration that regenerates this dataset bit for bit.
    pub fn config(&self) -> DatasetConfig {
        DatasetConfig {
            stimulus: self.stimulus.clone(),
            camera: self.camera.clone(),
            contrast: self.contrast,
            train_count: self.splits.train.sample_count,
            test_count: self.splits.test.sample_count,
            base_seed: self.seeds.base_seed,
            workers: 0,
        }
    }

    /// Noise and signal scenes, rebuilt from the recorded stimulus and camera.
    pub fn scenes(&self) -> Result<(Scene, Scene)> {
        build_scenes(&self.config())
    }

    pub fn split(&self, name: &str) -> Result<&SplitInfo> {
        match name {
            "train" => Ok(&self.splits.train),
            "test" => Ok(&self.splits.test),
            _ => Err(HarnessError::Dataset(format!("unknown split {name:?}"))),
        }
    }
}

fn build_scenes(cfg: &DatasetConfig) -> Result<(Scene, Scene)> {
    let (w, h) = cfg.camera.pattern_dims();
    let pattern = cfg.stimulus.build(w, h)?;
    let optical = OpticalImage::new(&pattern, &cfg.camera)?;
    Ok((optical.scene(0.0)?, optical.scene(cfg.contrast)?))
}

fn split_info(name: &str, count: usize, start: u64, pixels: usize) -> SplitInfo {
    SplitInfo {
        sample_count: count,
        signal_count: (start..start + count as u64).filter(|&k| is_signal_trial(k)).count(),
        trial_id_start: start,
        images_file: format!("{name}_images.u16"),
        labels_file: format!("{name}_labels.u8"),
        image_bytes: (count * pixels * 2) as u64,
        label_bytes: count as u64,
    }
}

/// Writes a dataset and its manifest into `out`.
pub fn export_dataset(cfg: &DatasetConfig, out: &Path) -> Result<DatasetManifest> {
    cfg.validate()?;
    let (noise, signal) = build_scenes(cfg)?;
    let pixels = noise.len();
    let stream_seed = cfg.stream_seed();
    let train = split_info("train", cfg.train_count, 0, pixels);
    let test = split_info("test", cfg.test_count, cfg.train_count as u64, pixels);
    ensure_dir(out)?;
    super::with_workers(cfg.workers, || -> Result<()> {
        for split in [&train, &test] {
            write_split(out, split, &noise, &signal, stream_seed)?;
        }
        Ok(())
    })??;

    let lam = signal.lambda();
    let manifest = DatasetManifest {
        format: DATASET_FORMAT.into(),
        version: DATASET_VERSION,
        software: Software { name: software().name.into(), version: software().version.into() },
        stimulus: cfg.stimulus.clone(),
        camera: cfg.camera.clone(),
        contrast: cfg.contrast,
        classes: vec!["noise".into(), "signal".into()],
        width: noise.width(),
        height: noise.height(),
        image_encoding: "u16le".into(),
        label_encoding: "u8".into(),
        seeds: Seeds { base_seed: cfg.base_seed, stream_seed },
        splits: Splits { train, test },
        scene_stats: SceneStats {
            noise_mean: noise.lambda().iter().sum::<f64>() / pixels as f64,
            signal_mean: lam.iter().sum::<f64>() / pixels as f64,
            signal_min: lam.iter().copied().fold(f64::INFINITY, f64::min),
            signal_max: lam.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            clamped_fraction: signal.clamped_fraction(),
        },
        analytic_dprime: analytic_d_prime(noise.lambda(), lam)?,
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

fn write_split(dir: &Path, split: &SplitInfo, noise: &Scene, signal: &Scene, stream_seed: u64) -> Result<()> {
    let img_path = dir.join(&split.images_file);
    let lbl_path = dir.join(&split.labels_file);
    let mut images = BufWriter::new(fs::File::create(&img_path).map_err(|e| HarnessError::io(&img_path, e))?);
    let mut labels = Vec::with_capacity(split.sample_count);
    let end = split.trial_id_start + split.sample_count as u64;
    let mut start = split.trial_id_start;
    while start < end {
        let stop = (start + CHUNK as u64).min(end);
        let chunk: Vec<Vec<u8>> = (start..stop)
            .into_par_iter()
            .map(|k| {
                let scene = if is_signal_trial(k) { signal } else { noise };
                let s = sample(scene, stream_seed, k);
                let mut bytes = Vec::with_capacity(2 * s.len());
                for &c in &s.counts {
                    // meanLevel-scale scenes never come close; guard anyway
                    let v = u16::try_from(c).map_err(|_| HarnessError::CountOverflow(c))?;
                    bytes.extend_from_slice(&v.to_le_bytes());
                }
                Ok(bytes)
            })
            .collect::<Result<_>>()?;
        for bytes in &chunk {
            images.write_all(bytes).map_err(|e| HarnessError::io(&img_path, e))?;
        }
        labels.extend((start..stop).map(|k| u8::from(is_signal_trial(k))));
        start = stop;
    }
    images.flush().map_err(|e| HarnessError::io(&img_path, e))?;
    fs::write(&lbl_path, labels).map_err(|e| HarnessError::io(&lbl_path, e))
}

/// Reads one split back as sensor samples plus labels (`true` = signal).
pub fn load_split(manifest: &DatasetManifest, dir: &Path, name: &str) -> Result<(Vec<SensorSample>, Vec<bool>)> {
    let split = manifest.split(name)?;
    let img_path = dir.join(&split.images_file);
    let lbl_path = dir.join(&split.labels_file);
    let images = fs::read(&img_path).map_err(|e| HarnessError::io(&img_path, e))?;
    let labels = fs::read(&lbl_path).map_err(|e| HarnessError::io(&lbl_path, e))?;
    if images.len() as u64 != split.image_bytes || labels.len() as u64 != split.label_bytes {
        return Err(HarnessError::Dataset(format!(
            "{name} split: expected {} image and {} label bytes, found {} and {}",
            split.image_bytes,
            split.label_bytes,
            images.len(),
            labels.len()
        )));
    }
    let pixels = manifest.width * manifest.height;
    let samples = images
        .chunks_exact(2 * pixels)
        .enumerate()
        .map(|(i, raw)| SensorSample {
            width: manifest.width,
            height: manifest.height,
            counts: raw.chunks_exact(2).map(|b| u32::from(u16::from_le_bytes([b[0], b[1]]))).collect(),
            trial_id: split.trial_id_start + i as u64,
            stream_seed: manifest.seeds.stream_seed,
        })
        .collect();
    let labels = labels
        .iter()
        .map(|&l| match l {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(HarnessError::Dataset(format!("label byte {v} is neither 0 nor 1"))),
        })
        .collect::<Result<_>>()?;
    Ok((samples, labels))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ScoreReport {
    pub samples: usize,
    pub counts: ConfusionCounts,
    pub hit_rate: f64,
    pub false_alarm_rate: f64,
    pub dprime: f64,
    /// Analytic ideal-observer d′ for the same dataset, for reference.
    pub analytic_dprime: f64,
}

/// Parses a predictions file: one `0` or `1` per line. A single trailing
/// newline is allowed; blank lines elsewhere are errors.
pub fn parse_predictions(text: &str) -> Result<Vec<bool>> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    let body = body.strip_suffix('\r').unwrap_or(body);
    if body.is_empty() {
        return Ok(Vec::new());
    }
    body.split('\n')
        .enumerate()
        .map(|(i, line)| match line.trim() {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(HarnessError::Predictions(format!("line {}: unknown label {other:?}", i + 1))),
        })
        .collect()
}

/// Scores test-split predictions against the manifest's labels.
pub fn score_predictions(manifest_path: &Path, predictions_path: &Path) -> Result<ScoreReport> {
    let (manifest, dir) = DatasetManifest::read(manifest_path)?;
    let split = &manifest.splits.test;
    let lbl_path = dir.join(&split.labels_file);
    let labels = fs::read(&lbl_path).map_err(|e| HarnessError::io(&lbl_path, e))?;
    if labels.len() != split.sample_count {
        return Err(HarnessError::Dataset(format!(
            "test labels hold {} samples, manifest declares {}",
            labels.len(),
            split.sample_count
        )));
    }
    let text = fs::read_to_string(predictions_path).map_err(|e| HarnessError::io(predictions_path, e))?;
    let predictions = parse_predictions(&text)?;
    if predictions.len() != labels.len() {
        return Err(HarnessError::Predictions(format!(
            "{} predictions for {} test samples",
            predictions.len(),
            labels.len()
        )));
    }
    let counts = ConfusionCounts::from_decisions(labels.iter().map(|&l| l == 1).zip(predictions));
    let (hit_rate, false_alarm_rate) = corrected_rates(&counts)?;
    Ok(ScoreReport {
        samples: labels.len(),
        counts,
        hit_rate,
        false_alarm_rate,
        dprime: d_prime(&counts)?,
        analytic_dprime: manifest.analytic_dprime,
    })
}
