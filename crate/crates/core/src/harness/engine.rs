//! Shared machinery: evaluating one (replicate, contrast) cell on paired
//! trials, walking a contrast grid with upward extension, and summarising
//! curves across replicates.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{Detector, ExperimentConfig};
use super::{HarnessError, Result};
use crate::metrics::{analytic_d_prime, d_prime, ConfusionCounts, SweepCurve, SweepPoint};
use crate::observer::HypothesisSet;
use crate::optics::{OpticalImage, Scene};
use crate::seed::{derive_seed, keyed_stream, purpose};
use crate::sensor::sample;
use crate::svm::{train_svm, CountRows, LinearModel, TrainingMeta};

/// Seed of replicate `r`.
pub fn replicate_seed(base: u64, r: usize) -> u64 {
    derive_seed(base, &[purpose::REPLICATE, r as u64])
}

/// Test, training and solver seeds for one cell.
pub fn cell_seeds(replicate_seed: u64, contrast: f64) -> (u64, u64, u64) {
    let bits = contrast.to_bits();
    (
        derive_seed(replicate_seed, &[purpose::TEST, bits]),
        derive_seed(replicate_seed, &[purpose::TRAIN, bits]),
        derive_seed(replicate_seed, &[purpose::SVM, bits]),
    )
}

/// Signal location for trial `trial` when a stream has `n` candidates.
pub fn location_of(stream_seed: u64, trial: u64, n: usize) -> usize {
    if n == 1 {
        0
    } else {
        keyed_stream(derive_seed(stream_seed, &[purpose::LOCATION]), trial).random_range(0..n)
    }
}

/// Trial `k` carries a signal iff `k` is odd, so every block of two trials is balanced.
pub fn is_signal_trial(k: u64) -> bool {
    k % 2 == 1
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CellRecord {
    pub replicate: usize,
    pub contrast: f64,
    pub test_seed: u64,
    pub train_seed: u64,
    /// SHA-256 over the per-trial image fingerprints; every detector in the
    /// cell scored exactly these images.
    pub image_digest: String,
    pub clamped_fraction: f64,
    /// Analytic ideal-observer d′ (single-location experiments only).
    pub analytic_dprime: Option<f64>,
    /// Fraction of signal trials on which the ideal observer named the right location.
    pub localization_accuracy: Option<f64>,
    pub svm: Option<TrainingMeta>,
}

pub(crate) struct CellResult {
    pub counts: Vec<(Detector, ConfusionCounts)>,
    pub record: CellRecord,
}

/// Everything a cell needs besides the contrast: the blurred pattern at each
/// candidate signal location. Any of them at zero contrast is the noise scene.
pub(crate) struct CellSetup<'a> {
    pub config: &'a ExperimentConfig,
    pub signals: &'a [OpticalImage],
}

impl CellSetup<'_> {
    pub fn evaluate(&self, replicate: usize, contrast: f64) -> Result<CellResult> {
        let cfg = self.config;
        let rep = replicate_seed(cfg.base_seed, replicate);
        let (test_seed, train_seed, svm_seed) = cell_seeds(rep, contrast);
        let first = &self.signals[0];
        let noise = first.scene(0.0)?;
        let signals: Vec<Scene> = self.signals.iter().map(|o| o.scene(contrast)).collect::<std::result::Result<_, _>>()?;
        let n_loc = signals.len();
        let clamped_fraction = signals.iter().map(Scene::clamped_fraction).fold(0.0, f64::max);
        let analytic_dprime =
            if n_loc == 1 { Some(analytic_d_prime(noise.lambda(), signals[0].lambda())?) } else { None };

        let p = cfg.signal_prior;
        let mut priors = vec![1.0 - p];
        priors.extend(std::iter::repeat_n(p / n_loc as f64, n_loc));
        let mut scenes = vec![noise.clone()];
        scenes.extend(signals.iter().cloned());
        let hset = HypothesisSet::new(scenes, priors)?;

        let scene_for = |seed: u64, k: u64| -> (bool, usize, &Scene) {
            if is_signal_trial(k) {
                let loc = location_of(seed, k, n_loc);
                (true, loc, &signals[loc])
            } else {
                (false, 0, &noise)
            }
        };

        let model = if cfg.uses(Detector::Svm) {
            let dim = noise.len();
            let n = cfg.train_count;
            let mut buf = vec![0u16; dim * n];
            buf.par_chunks_mut(dim).enumerate().try_for_each(|(k, row)| {
                let (_, _, scene) = scene_for(train_seed, k as u64);
                let s = sample(scene, train_seed, k as u64);
                for (dst, &c) in row.iter_mut().zip(&s.counts) {
                    *dst = u16::try_from(c).map_err(|_| HarnessError::CountOverflow(c))?;
                }
                Ok::<(), HarnessError>(())
            })?;
            let labels: Vec<bool> = (0..n as u64).map(is_signal_trial).collect();
            let rows = CountRows::from_raw(dim, buf);
            let scale = 1.0 / noise.mean_level();
            Some(train_svm(&rows, &labels, scale, &cfg.svm.params(svm_seed))?)
        } else {
            None
        };

        struct Trial {
            signal: bool,
            io: Option<usize>,
            location: usize,
            svm: Option<bool>,
            fingerprint: u64,
        }
        let use_io = cfg.uses(Detector::Io);
        let trials: Vec<Trial> = (0..2 * cfg.trials_per_class as u64)
            .into_par_iter()
            .map(|k| {
                let (signal, location, scene) = scene_for(test_seed, k);
                let s = sample(scene, test_seed, k);
                let io = if use_io { Some(hset.decide(&s)?) } else { None };
                let svm = model.as_ref().map(|m: &LinearModel| m.predict(&s)).transpose()?;
                Ok(Trial { signal, io, location, svm, fingerprint: s.fingerprint() })
            })
            .collect::<Result<_>>()?;

        let mut hasher = Sha256::new();
        for t in &trials {
            hasher.update(t.fingerprint.to_le_bytes());
        }
        let image_digest = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();

        let mut counts = Vec::new();
        let mut localization_accuracy = None;
        if use_io {
            counts.push((Detector::Io, ConfusionCounts::from_decisions(trials.iter().map(|t| (t.signal, t.io != Some(0))))));
            if n_loc > 1 {
                let signal_trials = trials.iter().filter(|t| t.signal).count();
                let located = trials.iter().filter(|t| t.signal && t.io == Some(t.location + 1)).count();
                localization_accuracy = Some(located as f64 / signal_trials as f64);
            }
        }
        if model.is_some() {
            counts.push((Detector::Svm, ConfusionCounts::from_decisions(trials.iter().map(|t| (t.signal, t.svm == Some(true))))));
        }
        Ok(CellResult {
            counts,
            record: CellRecord {
                replicate,
                contrast,
                test_seed,
                train_seed,
                image_digest,
                clamped_fraction,
                analytic_dprime,
                localization_accuracy,
                svm: model.map(|m| m.meta),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CurveRecord {
    pub detector: Detector,
    pub replicate: usize,
    pub curve: SweepCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ThresholdFailure {
    pub replicate: usize,
    pub kind: &'static str,
    pub message: String,
    pub max_dprime: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DetectorSummary {
    pub detector: Detector,
    /// Per replicate; `None` where the threshold was not bracketed.
    pub threshold_contrasts: Vec<Option<f64>>,
    pub sensitivities: Vec<Option<f64>>,
    /// Mean and sample standard deviation over bracketed replicates.
    pub sensitivity_mean: Option<f64>,
    pub sensitivity_std: Option<f64>,
    pub errors: Vec<ThresholdFailure>,
}

pub(crate) struct GridRun {
    pub contrasts: Vec<f64>,
    pub extensions: usize,
    pub cells: Vec<CellRecord>,
    pub curves: Vec<CurveRecord>,
}

/// Evaluates every (replicate, contrast) cell, extending the grid a decade
/// at a time while any curve misses the target: upward when the curve stays
/// below it, downward when the curve starts above it.
pub(crate) fn run_grid(setup: &CellSetup<'_>) -> Result<GridRun> {
    let cfg = setup.config;
    let mut contrasts = cfg.contrast_grid.points()?;
    let ppd = cfg.contrast_grid.points_per_decade();
    let step = 10f64.powf(1.0 / ppd as f64);
    let mut results: Vec<CellResult> = Vec::new();
    let mut pending = contrasts.clone();
    let mut extensions = 0;
    loop {
        for r in 0..cfg.replicates {
            for &c in &pending {
                results.push(setup.evaluate(r, c)?);
            }
        }
        let curves = assemble_curves(&results, cfg)?;
        pending.clear();
        if extensions < cfg.max_extensions {
            let open: Vec<&SweepCurve> =
                curves.iter().map(|c| &c.curve).filter(|c| c.threshold_contrast.is_none()).collect();
            // a curve that starts above the target needs lower contrasts
            if open.iter().any(|c| c.points.first().is_some_and(|p| p.dprime > cfg.target_dprime)) {
                let first = contrasts[0];
                pending.extend((1..=ppd).rev().map(|i| first / step.powi(i as i32)).filter(|&c| c > 0.0));
            }
            if open.iter().any(|c| c.points.first().is_none_or(|p| p.dprime <= cfg.target_dprime)) {
                let last = *contrasts.last().expect("non-empty grid");
                pending.extend((1..=ppd).map(|i| last * step.powi(i as i32)).take_while(|&c| c > 0.0 && c <= cfg.max_contrast));
            }
        }
        if pending.is_empty() {
            results.sort_by(|a, b| {
                (a.record.replicate, a.record.contrast).partial_cmp(&(b.record.replicate, b.record.contrast)).expect("finite")
            });
            return Ok(GridRun { contrasts, extensions, cells: results.into_iter().map(|r| r.record).collect(), curves });
        }
        contrasts.extend_from_slice(&pending);
        contrasts.sort_by(|a, b| a.partial_cmp(b).expect("finite contrast"));
        extensions += 1;
    }
}

fn assemble_curves(results: &[CellResult], cfg: &ExperimentConfig) -> Result<Vec<CurveRecord>> {
    let mut out = Vec::new();
    for d in cfg.detector_list() {
        for r in 0..cfg.replicates {
            let mut points: Vec<SweepPoint> = results
                .iter()
                .filter(|c| c.record.replicate == r)
                .filter_map(|c| c.counts.iter().find(|(det, _)| *det == d).map(|(_, k)| (c.record.contrast, *k)))
                .map(|(contrast, counts)| Ok(SweepPoint { contrast, dprime: d_prime(&counts)?, counts }))
                .collect::<Result<_>>()?;
            points.sort_by(|a, b| a.contrast.partial_cmp(&b.contrast).expect("finite contrast"));
            out.push(CurveRecord { detector: d, replicate: r, curve: SweepCurve::assemble(points, cfg.target_dprime)? });
        }
    }
    Ok(out)
}

pub(crate) fn summarize(curves: &[CurveRecord], detectors: &[Detector], target: f64) -> Vec<DetectorSummary> {
    detectors
        .iter()
        .map(|&d| {
            let mine: Vec<&CurveRecord> = curves.iter().filter(|c| c.detector == d).collect();
            let threshold_contrasts: Vec<Option<f64>> = mine.iter().map(|c| c.curve.threshold_contrast).collect();
            let sensitivities: Vec<Option<f64>> = mine.iter().map(|c| c.curve.sensitivity).collect();
            let ok: Vec<f64> = sensitivities.iter().flatten().copied().collect();
            let (sensitivity_mean, sensitivity_std) = mean_std(&ok);
            let errors = mine
                .iter()
                .filter(|c| c.curve.threshold_contrast.is_none())
                .map(|c| ThresholdFailure {
                    replicate: c.replicate,
                    kind: "thresholdNotBracketed",
                    message: format!("no contrast pair brackets d' = {target}"),
                    max_dprime: c.curve.max_dprime(),
                })
                .collect();
            DetectorSummary { detector: d, threshold_contrasts, sensitivities, sensitivity_mean, sensitivity_std, errors }
        })
        .collect()
}

pub(crate) fn mean_std(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    (Some(mean), Some(std))
}
