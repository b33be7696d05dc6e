//! Linear support vector machine trained by dual coordinate descent on the
//! hinge loss (the L1-loss SVC dual solver of liblinear, with shrinking).
//!
//! The bias is learned as the weight of a constant feature of value 1, so the
//! minimized objective is `½(‖w‖² + b²) + C Σ max(0, 1 − yᵢ(w·xᵢ + b))`.
//! Photon-count features are multiplied by `feature_scale` (by default
//! `1 / mean_level`) both in training and prediction.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::keyed_stream;
use crate::sensor::SensorSample;

#[derive(Debug, Error)]
pub enum SvmError {
    #[error("training set must contain both classes")]
    SingleClass,
    #[error("invalid SVM parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: model has {model} weights, sample has {sample} pixels")]
    DimensionMismatch { model: usize, sample: usize },
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SvmError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct SvmParams {
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Seed for the coordinate visiting order.
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self { c: 1.0, tol: 1e-3, max_iter: 1000, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrainingMeta {
    pub iterations: usize,
    pub converged: bool,
    /// Primal objective at the returned solution.
    pub objective: f64,
    pub feature_scale: f64,
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub support_vectors: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub meta: TrainingMeta,
}

/// Row-major training data. Implementations hide the element type.
pub trait FeatureRows: Sync {
    fn rows(&self) -> usize;
    fn dim(&self) -> usize;
    fn dot(&self, row: usize, w: &[f64]) -> f64;
    fn axpy(&self, row: usize, a: f64, w: &mut [f64]);
    fn sq_norm(&self, row: usize) -> f64;
}

/// Dense real-valued rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseRows {
    dim: usize,
    data: Vec<f64>,
}

impl DenseRows {
    pub fn new(dim: usize, data: Vec<f64>) -> Self {
        assert!(dim > 0 && data.len() % dim == 0, "data does not divide into rows of {dim}");
        Self { dim, data }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

impl FeatureRows for DenseRows {
    fn rows(&self) -> usize {
        self.data.len() / self.dim
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn dot(&self, row: usize, w: &[f64]) -> f64 {
        lane_dot(self.row(row), w, |x| x)
    }
    fn axpy(&self, row: usize, a: f64, w: &mut [f64]) {
        w.iter_mut().zip(self.row(row)).for_each(|(w, x)| *w += a * x);
    }
    fn sq_norm(&self, row: usize) -> f64 {
        self.row(row).iter().map(|x| x * x).sum()
    }
}

/// Photon-count rows stored compactly as `u16`.
#[derive(Debug, Clone, PartialEq)]
pub struct CountRows {
    dim: usize,
    data: Vec<u16>,
}

impl CountRows {
    pub fn with_capacity(dim: usize, rows: usize) -> Self {
        Self { dim, data: Vec::with_capacity(dim * rows) }
    }

    pub fn from_raw(dim: usize, data: Vec<u16>) -> Self {
        assert!(dim > 0 && data.len() % dim == 0, "data does not divide into rows of {dim}");
        Self { dim, data }
    }

    /// Appends one sample; fails if any count exceeds `u16::MAX`.
    pub fn push(&mut self, counts: &[u32]) -> Result<()> {
        if counts.len() != self.dim {
            return Err(SvmError::DimensionMismatch { model: self.dim, sample: counts.len() });
        }
        for &c in counts {
            let v = u16::try_from(c).map_err(|_| SvmError::InvalidParameter(format!("count {c} overflows u16")))?;
            self.data.push(v);
        }
        Ok(())
    }

    fn row(&self, i: usize) -> &[u16] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

impl FeatureRows for CountRows {
    fn rows(&self) -> usize {
        self.data.len() / self.dim
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn dot(&self, row: usize, w: &[f64]) -> f64 {
        lane_dot(self.row(row), w, f64::from)
    }
    fn axpy(&self, row: usize, a: f64, w: &mut [f64]) {
        w.iter_mut().zip(self.row(row)).for_each(|(w, &x)| *w += a * f64::from(x));
    }
    fn sq_norm(&self, row: usize) -> f64 {
        self.row(row).iter().map(|&x| f64::from(x) * f64::from(x)).sum()
    }
}

/// Dot product with eight independent accumulators so the loop vectorizes.
fn lane_dot<T: Copy>(x: &[T], w: &[f64], f: impl Fn(T) -> f64) -> f64 {
    let mut acc = [0.0; 8];
    let (xc, wc) = (x.chunks_exact(8), w.chunks_exact(8));
    let (xr, wr) = (xc.remainder(), wc.remainder());
    for (xs, ws) in xc.zip(wc) {
        for j in 0..8 {
            acc[j] += f(xs[j]) * ws[j];
        }
    }
    let tail: f64 = xr.iter().zip(wr).map(|(&x, w)| f(x) * w).sum();
    acc.iter().sum::<f64>() + tail
}

/// Trains on `features` (scaled by `feature_scale`) with labels `true` = signal.
pub fn train_svm<F: FeatureRows>(
    features: &F,
    labels: &[bool],
    feature_scale: f64,
    params: &SvmParams,
) -> Result<LinearModel> {
    let l = features.rows();
    if labels.len() != l {
        return Err(SvmError::InvalidParameter(format!("{} labels for {l} rows", labels.len())));
    }
    if !(params.c > 0.0 && params.c.is_finite()) {
        return Err(SvmError::InvalidParameter(format!("C must be positive, got {}", params.c)));
    }
    if !(params.tol > 0.0) || params.max_iter == 0 {
        return Err(SvmError::InvalidParameter("tol must be positive and maxIter at least 1".into()));
    }
    if !(feature_scale > 0.0 && feature_scale.is_finite()) {
        return Err(SvmError::InvalidParameter(format!("feature scale must be positive, got {feature_scale}")));
    }
    if !labels.iter().any(|&y| y) || labels.iter().all(|&y| y) {
        return Err(SvmError::SingleClass);
    }

    let s = feature_scale;
    let c = params.c;
    let y: Vec<f64> = labels.iter().map(|&t| if t { 1.0 } else { -1.0 }).collect();
    // w is kept in unscaled-feature units: w·(s x) = s (w·x)
    let mut w = vec![0.0; features.dim()];
    let mut b = 0.0;
    let qd: Vec<f64> = (0..l).map(|i| s * s * features.sq_norm(i) + 1.0).collect();
    let mut alpha = vec![0.0; l];
    let mut index: Vec<usize> = (0..l).collect();
    let mut active = l;
    let mut pg_max_old = f64::INFINITY;
    let mut pg_min_old = f64::NEG_INFINITY;
    let mut rng = keyed_stream(params.seed, crate::seed::purpose::SVM);
    let mut iter = 0;
    let mut converged = false;

    while iter < params.max_iter {
        let mut pg_max_new = f64::NEG_INFINITY;
        let mut pg_min_new = f64::INFINITY;
        index[..active].shuffle(&mut rng);

        let mut k = 0;
        while k < active {
            let i = index[k];
            let g = y[i] * (s * features.dot(i, &w) + b) - 1.0;
            let mut pg = 0.0;
            if alpha[i] == 0.0 {
                if g > pg_max_old {
                    active -= 1;
                    index.swap(k, active);
                    continue;
                } else if g < 0.0 {
                    pg = g;
                }
            } else if alpha[i] == c {
                if g < pg_min_old {
                    active -= 1;
                    index.swap(k, active);
                    continue;
                } else if g > 0.0 {
                    pg = g;
                }
            } else {
                pg = g;
            }
            pg_max_new = pg_max_new.max(pg);
            pg_min_new = pg_min_new.min(pg);

            if pg.abs() > 1e-12 {
                let old = alpha[i];
                alpha[i] = (old - g / qd[i]).clamp(0.0, c);
                let d = (alpha[i] - old) * y[i];
                features.axpy(i, d * s, &mut w);
                b += d;
            }
            k += 1;
        }
        iter += 1;

        if pg_max_new - pg_min_new <= params.tol {
            if active == l {
                converged = true;
                break;
            }
            active = l;
            pg_max_old = f64::INFINITY;
            pg_min_old = f64::NEG_INFINITY;
            continue;
        }
        pg_max_old = if pg_max_new <= 0.0 { f64::INFINITY } else { pg_max_new };
        pg_min_old = if pg_min_new >= 0.0 { f64::NEG_INFINITY } else { pg_min_new };
    }

    // fold the scale into the weights so the model acts on raw counts via s
    let mut model = LinearModel {
        weights: w,
        bias: b,
        meta: TrainingMeta {
            iterations: iter,
            converged,
            objective: 0.0,
            feature_scale: s,
            c,
            tol: params.tol,
            max_iter: params.max_iter,
            support_vectors: alpha.iter().filter(|&&a| a > 0.0).count(),
        },
    };
    model.meta.objective = primal_objective(&model, features, labels);
    Ok(model)
}

/// `½(‖w‖² + b²) + C Σ hinge`, evaluated from the stored model.
pub fn primal_objective<F: FeatureRows>(model: &LinearModel, features: &F, labels: &[bool]) -> f64 {
    let reg = 0.5 * (model.weights.iter().map(|w| w * w).sum::<f64>() + model.bias * model.bias);
    let loss: f64 = (0..features.rows())
        .map(|i| {
            let y = if labels[i] { 1.0 } else { -1.0 };
            (1.0 - y * model.decision_rows(features, i)).max(0.0)
        })
        .sum();
    reg + model.meta.c * loss
}

impl LinearModel {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    fn decision_rows<F: FeatureRows>(&self, features: &F, row: usize) -> f64 {
        self.meta.feature_scale * features.dot(row, &self.weights) + self.bias
    }

    /// `w·(s x) + b` for raw real-valued features.
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(SvmError::DimensionMismatch { model: self.weights.len(), sample: x.len() });
        }
        let dot: f64 = self.weights.iter().zip(x).map(|(w, x)| w * x).sum();
        Ok(self.meta.feature_scale * dot + self.bias)
    }

    pub fn decision_counts(&self, counts: &[u32]) -> Result<f64> {
        if counts.len() != self.weights.len() {
            return Err(SvmError::DimensionMismatch { model: self.weights.len(), sample: counts.len() });
        }
        let dot: f64 = self.weights.iter().zip(counts).map(|(w, &x)| w * f64::from(x)).sum();
        Ok(self.meta.feature_scale * dot + self.bias)
    }

    /// `true` = signal. A decision value of exactly zero counts as noise.
    pub fn predict(&self, sample: &SensorSample) -> Result<bool> {
        Ok(self.decision_counts(&sample.counts)? > 0.0)
    }

    pub fn predict_features(&self, x: &[f64]) -> Result<bool> {
        Ok(self.decision_value(x)? > 0.0)
    }

    /// Writes `<stem>.bin` and `<stem>.json`.
    ///
    /// Binary layout (little-endian): magic `b"LSVM"`, `u32` version = 1,
    /// `u64` dimension, `f64` bias, `f64` feature scale, then `dimension`
    /// `f64` weights. The JSON sidecar carries the full [`TrainingMeta`].
    pub fn save(&self, stem: impl AsRef<Path>) -> Result<()> {
        let stem = stem.as_ref();
        let mut buf = Vec::with_capacity(32 + 8 * self.weights.len());
        buf.extend_from_slice(MODEL_MAGIC);
        buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.weights.len() as u64).to_le_bytes());
        buf.extend_from_slice(&self.bias.to_le_bytes());
        buf.extend_from_slice(&self.meta.feature_scale.to_le_bytes());
        for w in &self.weights {
            buf.extend_from_slice(&w.to_le_bytes());
        }
        fs::File::create(stem.with_extension("bin"))?.write_all(&buf)?;
        let json = serde_json::to_string_pretty(&self.meta).map_err(|e| SvmError::Format(e.to_string()))?;
        fs::write(stem.with_extension("json"), json)?;
        Ok(())
    }

    pub fn load(stem: impl AsRef<Path>) -> Result<Self> {
        let stem = stem.as_ref();
        let mut buf = Vec::new();
        fs::File::open(stem.with_extension("bin"))?.read_to_end(&mut buf)?;
        if buf.len() < 32 || &buf[..4] != MODEL_MAGIC {
            return Err(SvmError::Format("not a linear SVM model file".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().expect("4 bytes"));
        let u64_at = |o: usize| u64::from_le_bytes(buf[o..o + 8].try_into().expect("8 bytes"));
        let f64_at = |o: usize| f64::from_le_bytes(buf[o..o + 8].try_into().expect("8 bytes"));
        if u32_at(4) != MODEL_VERSION {
            return Err(SvmError::Format(format!("unsupported model version {}", u32_at(4))));
        }
        let dim = u64_at(8) as usize;
        if buf.len() != 32 + 8 * dim {
            return Err(SvmError::Format(format!("expected {} bytes, found {}", 32 + 8 * dim, buf.len())));
        }
        let bias = f64_at(16);
        let scale = f64_at(24);
        let weights = (0..dim).map(|i| f64_at(32 + 8 * i)).collect();
        let meta: TrainingMeta = serde_json::from_slice(&fs::read(stem.with_extension("json"))?)
            .map_err(|e| SvmError::Format(e.to_string()))?;
        if meta.feature_scale != scale {
            return Err(SvmError::Format("sidecar feature scale disagrees with binary record".into()));
        }
        Ok(Self { weights, bias, meta })
    }
}

const MODEL_MAGIC: &[u8; 4] = b"LSVM";
const MODEL_VERSION: u32 = 1;

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn params() -> SvmParams {
        SvmParams::default()
    }

    #[test]
    fn symmetric_two_point_problem() {
        let x = DenseRows::new(1, vec![1.0, -1.0]);
        let m = train_svm(&x, &[true, false], 1.0, &params()).unwrap();
        assert!(m.meta.converged);
        assert_abs_diff_eq!(m.weights[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(m.bias, 0.0, epsilon = 1e-9);
        assert!(m.predict_features(&[1.0]).unwrap());
        assert!(!m.predict_features(&[-1.0]).unwrap());
        assert!(!m.predict_features(&[0.0]).unwrap());
    }

    #[test]
    fn rejects_single_class_and_bad_parameters() {
        let x = DenseRows::new(1, vec![1.0, 2.0]);
        assert!(matches!(train_svm(&x, &[true, true], 1.0, &params()), Err(SvmError::SingleClass)));
        let p = SvmParams { c: 0.0, ..params() };
        assert!(train_svm(&x, &[true, false], 1.0, &p).is_err());
        assert!(train_svm(&x, &[true], 1.0, &params()).is_err());
    }

    fn separable_toy() -> (DenseRows, Vec<bool>) {
        let pts = [
            (2.0, 2.0, true),
            (3.0, 1.5, true),
            (2.5, 3.0, true),
            (4.0, 4.0, true),
            (-1.0, -0.5, false),
            (-2.0, 0.0, false),
            (0.0, -2.0, false),
            (-3.0, -3.0, false),
        ];
        let data = pts.iter().flat_map(|&(a, b, _)| [a, b]).collect();
        (DenseRows::new(2, data), pts.iter().map(|p| p.2).collect())
    }

    #[test]
    fn support_vectors_sit_on_the_margin() {
        let (x, y) = separable_toy();
        let p = SvmParams { c: 100.0, tol: 1e-6, ..params() };
        let m = train_svm(&x, &y, 1.0, &p).unwrap();
        assert!(m.meta.converged);
        let mut on_margin = 0;
        for i in 0..x.rows() {
            let f = m.decision_value(x.row(i)).unwrap();
            let yi = if y[i] { 1.0 } else { -1.0 };
            assert!(yi * f >= 1.0 - 10.0 * p.tol, "row {i} violates margin: {}", yi * f);
            if (f.abs() - 1.0).abs() <= 10.0 * p.tol {
                on_margin += 1;
            }
        }
        assert!(on_margin >= 2);
    }

    #[test]
    fn stored_objective_matches_recomputation() {
        let mut rng = keyed_stream(3, 3);
        let data: Vec<f64> = (0..200 * 5).map(|_| rng.random::<f64>() - 0.5).collect();
        let labels: Vec<bool> = (0..200).map(|i| data[i * 5] + 0.3 * data[i * 5 + 1] > 0.05).collect();
        let x = DenseRows::new(5, data);
        let m = train_svm(&x, &labels, 2.0, &params()).unwrap();
        let recomputed = primal_objective(&m, &x, &labels);
        assert!((recomputed - m.meta.objective).abs() <= 1e-6 * m.meta.objective.abs());
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let mut rng = keyed_stream(4, 4);
        let data: Vec<f64> = (0..300 * 4).map(|_| rng.random::<f64>()).collect();
        let labels: Vec<bool> = (0..300).map(|_| rng.random::<bool>()).collect();
        let x = DenseRows::new(4, data);
        let p = SvmParams { max_iter: 1, tol: 1e-12, ..params() };
        let m = train_svm(&x, &labels, 1.0, &p).unwrap();
        assert_eq!(m.meta.iterations, 1);
        assert!(!m.meta.converged);
    }

    #[test]
    fn duplicated_data_with_half_cost_gives_same_classifier() {
        let mut rng = keyed_stream(5, 5);
        let n = 300;
        let d = 6;
        let data: Vec<f64> = (0..n * d).map(|_| rng.random::<f64>() - 0.5).collect();
        let labels: Vec<bool> = (0..n).map(|i| data[i * d] - data[i * d + 2] + 0.2 * (rng.random::<f64>() - 0.5) > 0.0).collect();
        let mut dup = data.clone();
        dup.extend_from_slice(&data);
        let mut dup_labels = labels.clone();
        dup_labels.extend_from_slice(&labels);

        let tight = SvmParams { tol: 1e-6, max_iter: 5000, ..params() };
        let a = train_svm(&DenseRows::new(d, data), &labels, 1.0, &tight).unwrap();
        let b = train_svm(&DenseRows::new(d, dup), &dup_labels, 1.0, &SvmParams { c: 0.5, ..tight }).unwrap();
        let held: Vec<f64> = (0..1000 * d).map(|_| rng.random::<f64>() - 0.5).collect();
        let agree = (0..1000)
            .filter(|&i| {
                let x = &held[i * d..(i + 1) * d];
                a.predict_features(x).unwrap() == b.predict_features(x).unwrap()
            })
            .count();
        assert!(agree >= 995, "agreement {agree}/1000");
    }

    #[test]
    fn zero_weights_and_positive_bias_always_signal() {
        let m = LinearModel {
            weights: vec![0.0; 4],
            bias: 0.5,
            meta: TrainingMeta {
                iterations: 0,
                converged: true,
                objective: 0.0,
                feature_scale: 1.0 / 300.0,
                c: 1.0,
                tol: 1e-3,
                max_iter: 1,
                support_vectors: 0,
            },
        };
        let s = SensorSample { width: 2, height: 2, counts: vec![1, 900, 3, 0], trial_id: 0, stream_seed: 0 };
        assert!(m.predict(&s).unwrap());
        let wrong = SensorSample { width: 1, height: 1, counts: vec![1], trial_id: 0, stream_seed: 0 };
        assert!(matches!(m.predict(&wrong), Err(SvmError::DimensionMismatch { .. })));
    }

    #[test]
    fn consistent_rescaling_leaves_labels_unchanged() {
        let (x, y) = separable_toy();
        let m = train_svm(&x, &y, 1.0, &params()).unwrap();
        let scaled = DenseRows::new(2, x.data.iter().map(|v| v * 300.0).collect());
        let ms = train_svm(&scaled, &y, 1.0 / 300.0, &params()).unwrap();
        for i in 0..x.rows() {
            assert_eq!(m.predict_features(x.row(i)).unwrap(), ms.predict_features(scaled.row(i)).unwrap());
        }
    }

    #[test]
    fn count_rows_match_dense_rows() {
        let counts: Vec<u32> = (0..40).map(|i| (i * 37 % 23) as u32 + 280).collect();
        let mut rows = CountRows::with_capacity(4, 10);
        for chunk in counts.chunks(4) {
            rows.push(chunk).unwrap();
        }
        let dense = DenseRows::new(4, counts.iter().map(|&c| f64::from(c)).collect());
        let labels: Vec<bool> = (0..10).map(|i| counts[i * 4] > 290).collect();
        let a = train_svm(&rows, &labels, 1.0 / 300.0, &params()).unwrap();
        let b = train_svm(&dense, &labels, 1.0 / 300.0, &params()).unwrap();
        assert_eq!(a.weights, b.weights);
        assert!(rows.push(&[70_000, 0, 0, 0]).is_err());
    }

    #[test]
    fn save_and_load_round_trip() {
        let (x, y) = separable_toy();
        let m = train_svm(&x, &y, 0.5, &params()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("model");
        m.save(&stem).unwrap();
        assert_eq!(fs::metadata(stem.with_extension("bin")).unwrap().len(), 32 + 8 * 2);
        assert_eq!(LinearModel::load(&stem).unwrap(), m);
        fs::write(stem.with_extension("bin"), b"junk").unwrap();
        assert!(LinearModel::load(&stem).is_err());
    }
}
