//! Camera model: contrast pattern -> expected photon counts per sensor pixel.
//!
//! Monochromatic diffraction-limited optics (Airy or matched Gaussian PSF),
//! edge-replicated convolution, optional area-average resampling from a
//! finer scene grid, and non-negativity clamping.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stimulus::ContrastPattern;

/// First three zeros of J1; the Airy PSF support ends at the third.
pub const BESSEL_J1_ZEROS: [f64; 3] = [3.831_705_970_207_512, 7.015_586_669_815_619, 10.173_468_135_062_722];

#[derive(Debug, Error)]
pub enum OpticsError {
    #[error("invalid camera configuration: {0}")]
    InvalidConfig(String),
    #[error("pattern is {pattern_w}x{pattern_h} but the sensor is {sensor_w}x{sensor_h} in one-to-one mapping")]
    GridMismatch { pattern_w: usize, pattern_h: usize, sensor_w: usize, sensor_h: usize },
    #[error("contrast must be finite and >= 0, got {0}")]
    InvalidContrast(f64),
}

pub type Result<T> = std::result::Result<T, OpticsError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum OpticsMode {
    #[default]
    Airy,
    Gaussian,
    Bypass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Mapping {
    /// Pattern already lives on the sensor grid.
    #[default]
    OneToOne,
    /// Pattern lives on a scene grid that is area-averaged onto the sensor.
    Resample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct CameraConfig {
    pub f_number: f64,
    pub focal_length_mm: f64,
    pub pixel_pitch_um: f64,
    pub field_of_view_deg: f64,
    pub sensor_width: usize,
    pub sensor_height: usize,
    pub wavelength_nm: f64,
    pub optics_mode: OpticsMode,
    pub mapping: Mapping,
    /// Scene grid used when `mapping` is `resample`.
    pub scene_width: usize,
    pub scene_height: usize,
    /// Background photons per pixel per capture.
    pub mean_level: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            f_number: 4.0,
            focal_length_mm: 3.9,
            pixel_pitch_um: 2.8,
            field_of_view_deg: 10.0,
            sensor_width: 238,
            sensor_height: 238,
            wavelength_nm: 550.0,
            optics_mode: OpticsMode::Airy,
            mapping: Mapping::OneToOne,
            scene_width: 512,
            scene_height: 512,
            mean_level: 300.0,
        }
    }
}

impl CameraConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("fNumber", self.f_number),
            ("pixelPitchUm", self.pixel_pitch_um),
            ("wavelengthNm", self.wavelength_nm),
            ("meanLevel", self.mean_level),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(OpticsError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.sensor_width == 0 || self.sensor_height == 0 {
            return Err(OpticsError::InvalidConfig("sensor dimensions must be at least 1".into()));
        }
        if self.mapping == Mapping::Resample && (self.scene_width == 0 || self.scene_height == 0) {
            return Err(OpticsError::InvalidConfig("scene dimensions must be at least 1".into()));
        }
        Ok(())
    }

    /// Grid on which stimulus patterns must be generated for this camera.
    pub fn pattern_dims(&self) -> (usize, usize) {
        match self.mapping {
            Mapping::OneToOne => (self.sensor_width, self.sensor_height),
            Mapping::Resample => (self.scene_width, self.scene_height),
        }
    }

    pub fn nyquist_cycles_per_image(&self) -> f64 {
        self.sensor_width as f64 / 2.0
    }

    /// Horizontal field of view subtended by the sensor, in degrees.
    pub fn sensor_field_of_view_deg(&self) -> f64 {
        let half_width_mm = self.sensor_width as f64 * self.pixel_pitch_um * 1e-3 / 2.0;
        2.0 * (half_width_mm / self.focal_length_mm).atan().to_degrees()
    }

    fn wavelength_um(&self) -> f64 {
        self.wavelength_nm * 1e-3
    }

    /// Airy first-zero radius at the sensor plane, µm.
    pub fn airy_first_zero_um(&self) -> f64 {
        BESSEL_J1_ZEROS[0] / PI * self.wavelength_um() * self.f_number
    }

    /// Full width at half maximum of the Airy PSF, µm (`≈ 1.029 λ N`).
    pub fn airy_fwhm_um(&self) -> f64 {
        2.0 * AIRY_HALF_MAX_V / PI * self.wavelength_um() * self.f_number
    }

    /// Distance between pattern samples at the sensor plane, µm.
    fn sample_spacing_um(&self, pattern_width: usize) -> f64 {
        match self.mapping {
            Mapping::OneToOne => self.pixel_pitch_um,
            Mapping::Resample => self.sensor_width as f64 * self.pixel_pitch_um / pattern_width as f64,
        }
    }
}

/// First-kind Bessel function of order one.
///
/// Evaluates `J1(x) = (1/2π) ∫₀^{2π} cos(τ − x sin τ) dτ` with the trapezoid
/// rule, which converges geometrically for this periodic analytic integrand
/// once the node count exceeds `|x|` comfortably.
pub fn bessel_j1(x: f64) -> f64 {
    let nodes = 64 + 2 * x.abs().ceil() as usize;
    let step = 2.0 * PI / nodes as f64;
    let sum: f64 = (0..nodes)
        .map(|k| {
            let t = k as f64 * step;
            (t - x * t.sin()).cos()
        })
        .sum();
    sum / nodes as f64
}

/// Normalized Airy intensity `(2 J1(v) / v)²`.
pub fn airy_intensity(v: f64) -> f64 {
    if v.abs() < 1e-8 {
        return 1.0;
    }
    let a = 2.0 * bessel_j1(v) / v;
    a * a
}

/// `v` at which the Airy intensity falls to one half.
const AIRY_HALF_MAX_V: f64 = 1.616_339_948_310_703;

/// Square, odd-sized, unit-sum convolution kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct PsfKernel {
    half: usize,
    values: Vec<f64>,
}

impl PsfKernel {
    pub fn half_width(&self) -> usize {
        self.half
    }

    pub fn size(&self) -> usize {
        2 * self.half + 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Weight at offset `(dx, dy)` from the centre.
    pub fn at(&self, dx: isize, dy: isize) -> f64 {
        let s = self.size() as isize;
        let h = self.half as isize;
        self.values[((dy + h) * s + dx + h) as usize]
    }

    fn from_profile(support_um: f64, spacing_um: f64, profile: impl Fn(f64) -> f64) -> Self {
        let half = (support_um / spacing_um).floor() as usize;
        let size = 2 * half + 1;
        let mut values = Vec::with_capacity(size * size);
        for j in 0..size {
            for i in 0..size {
                let dx = (i as f64 - half as f64) * spacing_um;
                let dy = (j as f64 - half as f64) * spacing_um;
                let r = dx.hypot(dy);
                values.push(if r <= support_um { profile(r) } else { 0.0 });
            }
        }
        let total: f64 = values.iter().sum();
        values.iter_mut().for_each(|v| *v /= total);
        Self { half, values }
    }
}

/// PSF sampled at the sensor pixel pitch.
pub fn make_psf_kernel(config: &CameraConfig) -> Result<PsfKernel> {
    psf_kernel_at(config, config.pixel_pitch_um)
}

fn psf_kernel_at(config: &CameraConfig, spacing_um: f64) -> Result<PsfKernel> {
    config.validate()?;
    let lambda_n = config.wavelength_um() * config.f_number;
    let support = BESSEL_J1_ZEROS[2] / PI * lambda_n;
    match config.optics_mode {
        OpticsMode::Bypass => Err(OpticsError::InvalidConfig("bypass optics has no PSF".into())),
        OpticsMode::Airy => Ok(PsfKernel::from_profile(support, spacing_um, |r| airy_intensity(PI * r / lambda_n))),
        OpticsMode::Gaussian => {
            let sigma = config.airy_fwhm_um() / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt());
            Ok(PsfKernel::from_profile(support, spacing_um, |r| (-r * r / (2.0 * sigma * sigma)).exp()))
        }
    }
}

/// Expected photon counts on the sensor grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    width: usize,
    height: usize,
    lambda: Vec<f64>,
    mean_level: f64,
    clamped_fraction: f64,
}

impl Scene {
    /// Builds a scene from explicit rates; negative entries are clamped to zero.
    pub fn from_lambda(width: usize, height: usize, lambda: Vec<f64>, mean_level: f64) -> Result<Self> {
        if width * height != lambda.len() || lambda.is_empty() {
            return Err(OpticsError::InvalidConfig(format!(
                "{} rates do not fill a {width}x{height} grid",
                lambda.len()
            )));
        }
        if lambda.iter().any(|v| !v.is_finite()) {
            return Err(OpticsError::InvalidConfig("rates must be finite".into()));
        }
        let mut lambda = lambda;
        let mut clamped = 0usize;
        for v in lambda.iter_mut().filter(|v| **v < 0.0) {
            *v = 0.0;
            clamped += 1;
        }
        let clamped_fraction = clamped as f64 / lambda.len() as f64;
        Ok(Self { width, height, lambda, mean_level, clamped_fraction })
    }

    /// Spatially uniform scene.
    pub fn uniform(width: usize, height: usize, level: f64) -> Self {
        Self { width, height, lambda: vec![level; width * height], mean_level: level, clamped_fraction: 0.0 }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn mean_level(&self) -> f64 {
        self.mean_level
    }

    /// Fraction of pixels whose rate was negative before clamping.
    pub fn clamped_fraction(&self) -> f64 {
        self.clamped_fraction
    }

    /// Same scene with pixels reordered by `source` (`out[i] = in[source[i]]`).
    pub fn permuted(&self, source: &[usize]) -> Self {
        assert_eq!(source.len(), self.lambda.len(), "permutation length mismatch");
        Self { lambda: source.iter().map(|&s| self.lambda[s]).collect(), ..self.clone() }
    }
}

/// A pattern pushed through the optics once, ready to be scaled to any contrast.
///
/// The rendered rate is `mean * (1 + contrast * shape)`, where `shape` is the
/// pattern after PSF blur and resampling.
#[derive(Debug, Clone, PartialEq)]
pub struct OpticalImage {
    width: usize,
    height: usize,
    shape: Vec<f64>,
    mean_level: f64,
}

impl OpticalImage {
    pub fn new(pattern: &ContrastPattern, config: &CameraConfig) -> Result<Self> {
        config.validate()?;
        let (pw, ph) = (pattern.width(), pattern.height());
        if config.mapping == Mapping::OneToOne && (pw != config.sensor_width || ph != config.sensor_height) {
            return Err(OpticsError::GridMismatch {
                pattern_w: pw,
                pattern_h: ph,
                sensor_w: config.sensor_width,
                sensor_h: config.sensor_height,
            });
        }
        let blurred = match config.optics_mode {
            OpticsMode::Bypass => pattern.values().to_vec(),
            _ => {
                let kernel = psf_kernel_at(config, config.sample_spacing_um(pw))?;
                convolve_replicate(pattern.values(), pw, ph, &kernel)
            }
        };
        let shape = match config.mapping {
            Mapping::OneToOne => blurred,
            Mapping::Resample => area_resample(&blurred, pw, ph, config.sensor_width, config.sensor_height),
        };
        Ok(Self { width: config.sensor_width, height: config.sensor_height, shape, mean_level: config.mean_level })
    }

    pub fn shape(&self) -> &[f64] {
        &self.shape
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Largest contrast that needs no clamping.
    pub fn max_unclamped_contrast(&self) -> f64 {
        let lo = self.shape.iter().cloned().fold(0.0f64, f64::min);
        if lo < 0.0 {
            -1.0 / lo
        } else {
            f64::INFINITY
        }
    }

    pub fn scene(&self, contrast: f64) -> Result<Scene> {
        if !(contrast >= 0.0 && contrast.is_finite()) {
            return Err(OpticsError::InvalidContrast(contrast));
        }
        let m = self.mean_level;
        let lambda = self.shape.iter().map(|&s| m + m * contrast * s).collect();
        Scene::from_lambda(self.width, self.height, lambda, m)
    }
}

/// Renders `pattern` at `contrast` through the camera.
pub fn render_scene(pattern: &ContrastPattern, contrast: f64, config: &CameraConfig) -> Result<Scene> {
    OpticalImage::new(pattern, config)?.scene(contrast)
}

/// 2-D convolution with edge replication.
pub fn convolve_replicate(data: &[f64], width: usize, height: usize, kernel: &PsfKernel) -> Vec<f64> {
    let h = kernel.half as isize;
    let size = kernel.size();
    let (w, ht) = (width as isize, height as isize);
    let mut out = vec![0.0; data.len()];
    for y in 0..ht {
        for x in 0..w {
            let mut acc = 0.0;
            for ky in 0..size as isize {
                let sy = (y + ky - h).clamp(0, ht - 1);
                let row = &data[(sy * w) as usize..((sy + 1) * w) as usize];
                let krow = &kernel.values[ky as usize * size..(ky as usize + 1) * size];
                for (kx, &k) in krow.iter().enumerate() {
                    if k != 0.0 {
                        let sx = (x + kx as isize - h).clamp(0, w - 1);
                        acc += k * row[sx as usize];
                    }
                }
            }
            out[(y * w + x) as usize] = acc;
        }
    }
    out
}

/// Overlap weights mapping `src_len` cells onto `dst_len` cells of equal total extent.
fn overlap_weights(src_len: usize, dst_len: usize) -> Vec<Vec<(usize, f64)>> {
    let ratio = src_len as f64 / dst_len as f64;
    (0..dst_len)
        .map(|d| {
            let lo = d as f64 * ratio;
            let hi = (d + 1) as f64 * ratio;
            let mut weights = Vec::new();
            let mut s = lo.floor() as usize;
            while (s as f64) < hi && s < src_len {
                let overlap = (hi.min(s as f64 + 1.0) - lo.max(s as f64)).max(0.0);
                if overlap > 0.0 {
                    weights.push((s, overlap / ratio));
                }
                s += 1;
            }
            weights
        })
        .collect()
}

/// Area-average resampling (separable box overlap).
pub fn area_resample(data: &[f64], width: usize, height: usize, out_w: usize, out_h: usize) -> Vec<f64> {
    let wx = overlap_weights(width, out_w);
    let wy = overlap_weights(height, out_h);
    let mut rows = vec![0.0; height * out_w];
    for y in 0..height {
        for (x, ws) in wx.iter().enumerate() {
            rows[y * out_w + x] = ws.iter().map(|&(s, w)| w * data[y * width + s]).sum();
        }
    }
    let mut out = vec![0.0; out_w * out_h];
    for (y, ws) in wy.iter().enumerate() {
        for x in 0..out_w {
            out[y * out_w + x] = ws.iter().map(|&(s, w)| w * rows[s * out_w + x]).sum();
        }
    }
    out
}
