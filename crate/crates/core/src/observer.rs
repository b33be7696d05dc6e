//! Ideal observer for signal-known-exactly detection in Poisson noise.
//!
//! Decisions are maximum a-posteriori over a discrete hypothesis set; the
//! first hypothesis is conventionally the noise-only scene.

use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::optics::Scene;
use crate::sensor::SensorSample;

/// Lower bound applied to rates before taking logarithms.
pub const LAMBDA_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ObserverError {
    #[error("dimension mismatch: sample is {sample_w}x{sample_h}, scene is {scene_w}x{scene_h}")]
    DimensionMismatch { sample_w: usize, sample_h: usize, scene_w: usize, scene_h: usize },
    #[error("invalid hypothesis set: {0}")]
    InvalidHypotheses(String),
}

pub type Result<T> = std::result::Result<T, ObserverError>;

#[inline]
pub(crate) fn ln_rate(lambda: f64) -> f64 {
    lambda.max(LAMBDA_FLOOR).ln()
}

fn check_dims(sample: &SensorSample, scene: &Scene) -> Result<()> {
    if sample.width != scene.width() || sample.height != scene.height() || sample.len() != scene.len() {
        return Err(ObserverError::DimensionMismatch {
            sample_w: sample.width,
            sample_h: sample.height,
            scene_w: scene.width(),
            scene_h: scene.height(),
        });
    }
    Ok(())
}

/// `Σ N ln λ − λ − ln N!` over all pixels.
pub fn log_likelihood(sample: &SensorSample, scene: &Scene) -> Result<f64> {
    check_dims(sample, scene)?;
    Ok(sample
        .counts
        .iter()
        .zip(scene.lambda())
        .map(|(&n, &lam)| {
            let n = f64::from(n);
            n * ln_rate(lam) - lam - ln_gamma(n + 1.0)
        })
        .sum())
}

/// Log-likelihood without the `ln N!` term, which cancels between hypotheses
/// evaluated on the same sample.
pub fn log_likelihood_kernel(sample: &SensorSample, scene: &Scene) -> Result<f64> {
    check_dims(sample, scene)?;
    Ok(sample.counts.iter().zip(scene.lambda()).map(|(&n, &lam)| f64::from(n) * ln_rate(lam) - lam).sum())
}

/// Pixels where a hypothesis departs from the reference scene.
#[derive(Debug, Clone)]
struct Contrast {
    index: Vec<u32>,
    log_ratio: Vec<f64>,
    /// `ln(prior_h / prior_0) − Σ (λ_h − λ_0)`
    offset: f64,
}

/// Candidate scenes with priors; index 0 is the reference (noise-only) scene.
#[derive(Debug, Clone)]
pub struct HypothesisSet {
    scenes: Vec<Scene>,
    priors: Vec<f64>,
    contrasts: Vec<Contrast>,
}

impl HypothesisSet {
    pub fn new(scenes: Vec<Scene>, priors: Vec<f64>) -> Result<Self> {
        if scenes.is_empty() {
            return Err(ObserverError::InvalidHypotheses("no hypotheses".into()));
        }
        if scenes.len() != priors.len() {
            return Err(ObserverError::InvalidHypotheses(format!(
                "{} scenes but {} priors",
                scenes.len(),
                priors.len()
            )));
        }
        if priors.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(ObserverError::InvalidHypotheses("priors must be positive".into()));
        }
        let total: f64 = priors.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(ObserverError::InvalidHypotheses(format!("priors sum to {total}, not 1")));
        }
        let (w, h, n) = (scenes[0].width(), scenes[0].height(), scenes[0].len());
        if scenes.iter().any(|s| s.width() != w || s.height() != h || s.len() != n) {
            return Err(ObserverError::InvalidHypotheses("scenes differ in size".into()));
        }

        let reference = scenes[0].lambda();
        let contrasts = scenes
            .iter()
            .zip(&priors)
            .map(|(scene, &prior)| {
                let mut index = Vec::new();
                let mut log_ratio = Vec::new();
                let mut rate_gap = 0.0;
                for (i, (&a, &b)) in scene.lambda().iter().zip(reference).enumerate() {
                    if a != b {
                        index.push(i as u32);
                        log_ratio.push(ln_rate(a) - ln_rate(b));
                        rate_gap += a - b;
                    }
                }
                Contrast { index, log_ratio, offset: (prior / priors[0]).ln() - rate_gap }
            })
            .collect();
        Ok(Self { scenes, priors, contrasts })
    }

    pub fn with_equal_priors(scenes: Vec<Scene>) -> Result<Self> {
        let p = 1.0 / scenes.len() as f64;
        let n = scenes.len();
        Self::new(scenes, vec![p; n])
    }

    /// Noise-only reference plus signal hypotheses, with half the prior mass on
    /// "absent" and the rest split evenly over the signal scenes.
    pub fn present_absent(noise: Scene, signals: Vec<Scene>) -> Result<Self> {
        if signals.is_empty() {
            return Err(ObserverError::InvalidHypotheses("need at least one signal hypothesis".into()));
        }
        let per_signal = 0.5 / signals.len() as f64;
        let mut priors = vec![0.5];
        priors.extend(std::iter::repeat_n(per_signal, signals.len()));
        let mut scenes = vec![noise];
        scenes.extend(signals);
        Self::new(scenes, priors)
    }

    pub fn len(&self) -> usize {
        self.scenes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenes.is_empty()
    }

    pub fn scenes(&self) -> &[Scene] {
        &self.scenes
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    /// Log posterior of each hypothesis relative to hypothesis 0 (up to the
    /// shared evidence term): `ln P(h) + LL(sample | h) − ln P(0) − LL(sample | 0)`.
    pub fn relative_scores(&self, sample: &SensorSample) -> Result<Vec<f64>> {
        check_dims(sample, &self.scenes[0])?;
        let counts = &sample.counts;
        Ok(self
            .contrasts
            .iter()
            .map(|c| {
                c.index.iter().zip(&c.log_ratio).map(|(&i, &lr)| f64::from(counts[i as usize]) * lr).sum::<f64>()
                    + c.offset
            })
            .collect())
    }

    /// Most probable hypothesis; ties go to the lowest index.
    pub fn decide(&self, sample: &SensorSample) -> Result<usize> {
        let scores = self.relative_scores(sample)?;
        let mut best = 0;
        for (h, &s) in scores.iter().enumerate().skip(1) {
            if s > scores[best] {
                best = h;
            }
        }
        Ok(best)
    }

    /// True when the most probable hypothesis is not the noise-only one.
    pub fn detect_present(&self, sample: &SensorSample) -> Result<bool> {
        if self.len() < 2 {
            return Err(ObserverError::InvalidHypotheses("detection needs noise plus a signal hypothesis".into()));
        }
        Ok(self.decide(sample)? != 0)
    }
}
