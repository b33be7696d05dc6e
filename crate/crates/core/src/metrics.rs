//! Signal-detection scoring: corrected hit/false-alarm rates, d′, the
//! analytic Poisson d′ and threshold extraction from performance curves.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::observer::LAMBDA_FLOOR;

/// Performance level that defines a threshold.
pub const CRITERION_DPRIME: f64 = 1.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no {0} trials: rates are undefined")]
    EmptyClass(&'static str),
    #[error("maps differ in size ({0} vs {1} pixels)")]
    SizeMismatch(usize, usize),
    #[error("rates must be non-negative and finite")]
    InvalidRate,
    #[error("contrasts must be strictly increasing")]
    UnorderedCurve,
    #[error("threshold not bracketed: no adjacent pair straddles d′ = {target}")]
    NotBracketed { target: f64, curve: Vec<(f64, f64)> },
}

pub type Result<T> = std::result::Result<T, MetricsError>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConfusionCounts {
    pub hits: u64,
    pub misses: u64,
    pub false_alarms: u64,
    pub correct_rejections: u64,
}

impl ConfusionCounts {
    pub fn new(hits: u64, misses: u64, false_alarms: u64, correct_rejections: u64) -> Self {
        Self { hits, misses, false_alarms, correct_rejections }
    }

    /// Tallies one trial.
    pub fn record(&mut self, signal_present: bool, said_present: bool) {
        match (signal_present, said_present) {
            (true, true) => self.hits += 1,
            (true, false) => self.misses += 1,
            (false, true) => self.false_alarms += 1,
            (false, false) => self.correct_rejections += 1,
        }
    }

    pub fn from_decisions(decisions: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut c = Self::default();
        for (truth, said) in decisions {
            c.record(truth, said);
        }
        c
    }

    pub fn signal_trials(&self) -> u64 {
        self.hits + self.misses
    }

    pub fn noise_trials(&self) -> u64 {
        self.false_alarms + self.correct_rejections
    }

    /// Same table with the roles of the two classes exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            hits: self.false_alarms,
            misses: self.correct_rejections,
            false_alarms: self.hits,
            correct_rejections: self.misses,
        }
    }
}

/// Hit and false-alarm rates with the half-count correction
/// `(0.5 + k) / (1 + n)`, which keeps both strictly inside (0, 1).
pub fn corrected_rates(c: &ConfusionCounts) -> Result<(f64, f64)> {
    if c.signal_trials() == 0 {
        return Err(MetricsError::EmptyClass("signal"));
    }
    if c.noise_trials() == 0 {
        return Err(MetricsError::EmptyClass("noise"));
    }
    let hit = (0.5 + c.hits as f64) / (1.0 + c.signal_trials() as f64);
    let fa = (0.5 + c.false_alarms as f64) / (1.0 + c.noise_trials() as f64);
    Ok((hit, fa))
}

/// `Z(hit rate) − Z(false-alarm rate)` on corrected rates.
pub fn d_prime(c: &ConfusionCounts) -> Result<f64> {
    let (hit, fa) = corrected_rates(c)?;
    Ok(inverse_normal_cdf(hit) - inverse_normal_cdf(fa))
}

/// Standard normal quantile (Wichura's AS241, about 1e-16 relative accuracy).
///
/// Returns ±∞ at 0 and 1 and NaN outside [0, 1].
pub fn inverse_normal_cdf(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.387_132_872_796_366_608,
        1.331_416_678_917_843_774_5e2,
        1.971_590_950_306_551_442_7e3,
        1.373_169_376_550_946_112_5e4,
        4.592_195_393_154_987_145_7e4,
        6.726_577_092_700_870_085_3e4,
        3.343_057_558_358_812_810_5e4,
        2.509_080_928_730_122_672_7e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.231_333_070_160_091_125_2e1,
        6.871_870_074_920_579_083e2,
        5.394_196_021_424_751_107_7e3,
        2.121_379_430_158_659_586_7e4,
        3.930_789_580_009_271_061e4,
        2.872_908_573_572_194_267_4e4,
        5.226_495_278_852_854_561e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_577_34,
        4.630_337_846_156_545_295_9,
        5.769_497_221_460_691_405_5,
        3.647_848_324_763_204_605_04,
        1.270_458_252_452_368_382_58,
        2.417_807_251_774_506_117_7e-1,
        2.272_384_498_926_918_458_33e-2,
        7.745_450_142_783_414_076_4e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_758_821_87,
        1.676_384_830_183_803_849_4,
        6.897_673_349_851_000_045_5e-1,
        1.481_039_764_274_800_745_9e-1,
        1.519_866_656_361_645_719_66e-2,
        5.475_938_084_995_344_946e-4,
        1.050_750_071_644_416_843_24e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_777_2,
        5.463_784_911_164_114_369_9,
        1.784_826_539_917_291_335_8,
        2.965_605_718_285_048_912_3e-1,
        2.653_218_952_657_612_309_3e-2,
        1.242_660_947_388_078_438_6e-3,
        2.711_555_568_743_487_578_15e-5,
        2.010_334_399_292_288_132_65e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.998_322_065_558_879_376_9e-1,
        1.369_298_809_227_358_053_1e-1,
        1.487_536_129_085_061_485_25e-2,
        7.868_691_311_456_132_591e-4,
        1.846_318_317_510_054_681_8e-5,
        1.421_511_758_316_445_888_7e-7,
        2.044_263_103_389_939_785_64e-15,
    ];
    fn poly(c: &[f64; 8], x: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
    }

    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let r = (-tail.ln()).sqrt();
    let x = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

/// Normal-approximation d′ between two Poisson rate maps:
/// `Σ (β−α) ln(β/α) / sqrt(½ Σ (α+β) ln²(β/α))`.
///
/// Pixels with α = β contribute nothing; zero rates are floored before the
/// logarithm. Identical (or all-zero) maps give 0.
pub fn analytic_d_prime(alpha: &[f64], beta: &[f64]) -> Result<f64> {
    if alpha.len() != beta.len() {
        return Err(MetricsError::SizeMismatch(alpha.len(), beta.len()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (&a, &b) in alpha.iter().zip(beta) {
        if !(a >= 0.0 && b >= 0.0 && a.is_finite() && b.is_finite()) {
            return Err(MetricsError::InvalidRate);
        }
        if a == b {
            continue;
        }
        let lr = b.max(LAMBDA_FLOOR).ln() - a.max(LAMBDA_FLOOR).ln();
        num += (b - a) * lr;
        den += (a + b) * lr * lr;
    }
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok(num / (0.5 * den).sqrt())
}

/// Contrast at which a piecewise-linear performance curve first rises through
/// `target`: the first pair with `d_i < target <= d_{i+1}`, scanning upward.
pub fn threshold_at(points: &[(f64, f64)], target: f64) -> Result<f64> {
    if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(MetricsError::UnorderedCurve);
    }
    if let Some(&(c, d)) = points.first() {
        if d == target {
            return Ok(c);
        }
    }
    for w in points.windows(2) {
        let ((c0, d0), (c1, d1)) = (w[0], w[1]);
        if d0 < target && target <= d1 {
            if d1 == target {
                return Ok(c1);
            }
            return Ok(c0 + (target - d0) / (d1 - d0) * (c1 - c0));
        }
    }
    Err(MetricsError::NotBracketed { target, curve: points.to_vec() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SweepPoint {
    pub contrast: f64,
    pub dprime: f64,
    pub counts: ConfusionCounts,
}

/// Performance curve plus the interpolated threshold, when one exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SweepCurve {
    pub points: Vec<SweepPoint>,
    pub threshold_contrast: Option<f64>,
    pub sensitivity: Option<f64>,
}

impl SweepCurve {
    /// Validates ordering and locates the `target` threshold. An unbracketed
    /// curve is returned with no threshold rather than as an error.
    pub fn assemble(points: Vec<SweepPoint>, target: f64) -> Result<Self> {
        let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.contrast, p.dprime)).collect();
        let threshold_contrast = match threshold_at(&xy, target) {
            Ok(t) => Some(t),
            Err(MetricsError::NotBracketed { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(Self { points, threshold_contrast, sensitivity: threshold_contrast.map(|t| 1.0 / t) })
    }

    pub fn max_dprime(&self) -> f64 {
        self.points.iter().map(|p| p.dprime).fold(f64::NEG_INFINITY, f64::max)
    }
}
