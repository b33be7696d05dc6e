//! Poisson photon-count sampling.
//!
//! Each trial draws from its own ChaCha8 stream keyed by `(stream_seed,
//! trial_id)`; pixels consume that stream in row-major order. A trial's image
//! therefore never depends on which other trials were drawn, or on which
//! thread drew it.

use rand::Rng;
use statrs::function::gamma::ln_gamma;

use crate::optics::Scene;
use crate::seed::keyed_stream;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensorSample {
    pub width: usize,
    pub height: usize,
    pub counts: Vec<u32>,
    pub trial_id: u64,
    pub stream_seed: u64,
}

impl SensorSample {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Stable 64-bit digest of the counts (not of the trial metadata).
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ self.counts.len() as u64;
        for &c in &self.counts {
            h = (h ^ u64::from(c)).wrapping_mul(0x0000_0100_0000_01b3).rotate_left(5);
        }
        h
    }

    /// Same sample with pixels reordered (`out[i] = in[source[i]]`).
    pub fn permuted(&self, source: &[usize]) -> Self {
        assert_eq!(source.len(), self.counts.len(), "permutation length mismatch");
        Self { counts: source.iter().map(|&s| self.counts[s]).collect(), ..self.clone() }
    }
}

/// Draws one Poisson image from `scene`.
pub fn sample(scene: &Scene, stream_seed: u64, trial_id: u64) -> SensorSample {
    let mut rng = keyed_stream(stream_seed, trial_id);
    let counts = scene.lambda().iter().map(|&lam| poisson(&mut rng, lam)).collect();
    SensorSample { width: scene.width(), height: scene.height(), counts, trial_id, stream_seed }
}

/// Poisson variate: inversion below λ = 10, Hörmann's PTRS transformed
/// rejection above.
pub fn poisson<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> u32 {
    if !(lambda > 0.0) {
        return 0;
    }
    if lambda < 10.0 {
        poisson_inversion(rng, lambda)
    } else {
        poisson_ptrs(rng, lambda)
    }
}

fn poisson_inversion<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> u32 {
    let u: f64 = rng.random();
    let mut k = 0u32;
    let mut p = (-lambda).exp();
    let mut cdf = p;
    // the tail beyond k = 200 is below 1e-150 for lambda < 10
    while u > cdf && k < 200 {
        k += 1;
        p *= lambda / f64::from(k);
        cdf += p;
    }
    k
}

fn poisson_ptrs<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> u32 {
    let slam = lambda.sqrt();
    let loglam = lambda.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + lambda + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u32;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -lambda + k * loglam - ln_gamma(k + 1.0);
        if lhs <= rhs {
            return k as u32;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::keyed_stream;
    use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};

    #[test]
    fn zero_rate_pixels_stay_dark() {
        let scene = Scene::from_lambda(2, 1, vec![0.0, 300.0], 150.0).unwrap();
        for t in 0..200 {
            assert_eq!(sample(&scene, 1, t).counts[0], 0);
        }
    }

    #[test]
    fn repeated_draws_are_identical() {
        let scene = Scene::uniform(16, 16, 300.0);
        assert_eq!(sample(&scene, 9, 4), sample(&scene, 9, 4));
        assert_ne!(sample(&scene, 9, 4).counts, sample(&scene, 9, 5).counts);
        assert_ne!(sample(&scene, 9, 4).counts, sample(&scene, 10, 4).counts);
    }

    #[test]
    fn shuffled_trial_order_gives_same_images() {
        let scene = Scene::uniform(8, 8, 30.0);
        let forward: Vec<_> = (0..50).map(|t| sample(&scene, 3, t)).collect();
        let mut backward: Vec<_> = (0..50).rev().map(|t| sample(&scene, 3, t)).collect();
        backward.reverse();
        assert_eq!(forward, backward);
    }

    #[test]
    fn moments_at_background_level() {
        let trials = 10_000u64;
        let scene = Scene::uniform(4, 2, 300.0);
        let n = scene.len();
        let mut sum = vec![0.0; n];
        let mut sq = vec![0.0; n];
        let mut cross = 0.0;
        for t in 0..trials {
            let s = sample(&scene, 21, t);
            for (i, &c) in s.counts.iter().enumerate() {
                let c = f64::from(c);
                sum[i] += c;
                sq[i] += c * c;
            }
            cross += (f64::from(s.counts[0]) - 300.0) * (f64::from(s.counts[1]) - 300.0);
        }
        let tf = trials as f64;
        for i in 0..n {
            let mean = sum[i] / tf;
            let var = (sq[i] - tf * mean * mean) / (tf - 1.0);
            assert!((mean - 300.0).abs() <= 4.0 * (300.0f64 / tf).sqrt(), "pixel {i} mean {mean}");
            let ratio = var / mean;
            assert!((0.95..=1.05).contains(&ratio), "pixel {i} var/mean {ratio}");
        }
        let corr = cross / tf / 300.0;
        assert!(corr.abs() <= 4.0 / tf.sqrt(), "adjacent correlation {corr}");
    }

    /// Chi-square goodness of fit against the exact pmf, pooling sparse tails.
    fn chi_square_p(lambda: f64, draws: usize) -> f64 {
        let mut rng = keyed_stream(1234, lambda.to_bits());
        let dist = Poisson::new(lambda).unwrap();
        let max_k = (lambda + 12.0 * lambda.sqrt() + 20.0) as usize;
        let mut observed = vec![0usize; max_k + 1];
        for _ in 0..draws {
            let k = poisson(&mut rng, lambda) as usize;
            observed[k.min(max_k)] += 1;
        }
        // bins with expected count >= 5, tails folded into edge bins
        let expected: Vec<f64> = (0..=max_k).map(|k| dist.pmf(k as u64) * draws as f64).collect();
        let mut bins: Vec<(f64, f64)> = Vec::new();
        let (mut obs_acc, mut exp_acc) = (0.0, 0.0);
        for k in 0..=max_k {
            obs_acc += observed[k] as f64;
            exp_acc += expected[k];
            if exp_acc >= 5.0 {
                bins.push((obs_acc, exp_acc));
                obs_acc = 0.0;
                exp_acc = 0.0;
            }
        }
        let tail = draws as f64 - bins.iter().map(|b| b.1).sum::<f64>();
        if let Some(last) = bins.last_mut() {
            last.0 += obs_acc;
            last.1 += tail.max(exp_acc);
        }
        let stat: f64 = bins.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
        let dof = (bins.len() - 1) as f64;
        1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
    }

    #[test]
    fn sampler_passes_chi_square_goodness_of_fit() {
        for lambda in [0.5, 30.0, 300.0, 9.99, 10.0] {
            let p = chi_square_p(lambda, 200_000);
            assert!(p > 1e-3, "lambda {lambda}: p = {p}");
        }
    }

    #[test]
    fn fingerprint_tracks_counts_only() {
        let scene = Scene::uniform(8, 8, 50.0);
        let a = sample(&scene, 1, 1);
        let mut b = a.clone();
        b.trial_id = 99;
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.counts[3] += 1;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
