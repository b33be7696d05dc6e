//! Signal patterns: harmonics, Gabors, disks, images, cellular-automaton
//! textures, block scrambling and multi-location placement.
//!
//! Every generator returns a [`ContrastPattern`]: a zero-mean map that becomes
//! a radiance image through `mean * (1 + contrast * pattern)`.

use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::keyed_stream;

/// Standard deviation of a contrast-one harmonic; used as the default
/// contrast for std-normalized stimuli.
pub const HARMONIC_STD: f64 = std::f64::consts::FRAC_1_SQRT_2;

const FLAT_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum StimulusError {
    #[error("aliased frequency: {freq} cycles/image exceeds the grid Nyquist limit {nyquist}")]
    AliasedFrequency { freq: f64, nyquist: f64 },
    #[error("zero-contrast pattern")]
    ZeroContrast,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("cannot read image {path}: {reason}")]
    Image { path: String, reason: String },
}

pub type Result<T> = std::result::Result<T, StimulusError>;

/// How a pattern's amplitude is pinned down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "kind")]
pub enum Normalization {
    /// `max - min = 2`, so `contrast` is the peak contrast.
    Peak,
    /// Standard deviation equals `target`.
    Std { target: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastPattern {
    width: usize,
    height: usize,
    values: Vec<f64>,
    normalization: Normalization,
}

impl ContrastPattern {
    /// Mean-subtracts `raw` and scales it so that `max - min = 2`.
    pub fn peak_normalized(width: usize, height: usize, raw: Vec<f64>) -> Result<Self> {
        let mut values = check_dims(width, height, raw)?;
        subtract_mean(&mut values);
        let (lo, hi) = min_max(&values);
        if hi - lo <= FLAT_EPS {
            return Err(StimulusError::ZeroContrast);
        }
        let scale = 2.0 / (hi - lo);
        values.iter_mut().for_each(|v| *v *= scale);
        Ok(Self { width, height, values, normalization: Normalization::Peak })
    }

    /// Mean-subtracts `raw` and scales it to a population standard deviation of `target`.
    pub fn std_normalized(width: usize, height: usize, raw: Vec<f64>, target: f64) -> Result<Self> {
        if !(target > 0.0 && target.is_finite()) {
            return Err(StimulusError::InvalidParameter(format!("target std must be positive, got {target}")));
        }
        let mut values = check_dims(width, height, raw)?;
        subtract_mean(&mut values);
        let sd = population_std(&values);
        if sd <= FLAT_EPS {
            return Err(StimulusError::ZeroContrast);
        }
        let scale = target / sd;
        values.iter_mut().for_each(|v| *v *= scale);
        Ok(Self { width, height, values, normalization: Normalization::Std { target } })
    }

    /// The all-zero pattern. Only produced by a DC harmonic.
    fn flat(width: usize, height: usize) -> Self {
        Self { width, height, values: vec![0.0; width * height], normalization: Normalization::Peak }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Row-major pixel values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn std(&self) -> f64 {
        population_std(&self.values)
    }

    pub fn peak_to_peak(&self) -> f64 {
        let (lo, hi) = min_max(&self.values);
        hi - lo
    }
}

fn check_dims(width: usize, height: usize, raw: Vec<f64>) -> Result<Vec<f64>> {
    if width == 0 || height == 0 {
        return Err(StimulusError::InvalidParameter("pattern dimensions must be at least 1".into()));
    }
    if raw.len() != width * height {
        return Err(StimulusError::InvalidParameter(format!(
            "{} values do not fill a {width}x{height} grid",
            raw.len()
        )));
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(StimulusError::InvalidParameter("pattern contains non-finite values".into()));
    }
    Ok(raw)
}

fn subtract_mean(values: &mut [f64]) {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter_mut().for_each(|v| *v -= mean);
}

fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

fn check_grid(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(StimulusError::InvalidParameter("pattern dimensions must be at least 1".into()));
    }
    Ok(())
}

fn harmonic_raw(freq: f64, phase: f64, orientation: f64, width: usize, height: usize) -> Result<Vec<f64>> {
    check_grid(width, height)?;
    if !(freq >= 0.0 && freq.is_finite()) {
        return Err(StimulusError::InvalidParameter(format!("frequency must be >= 0, got {freq}")));
    }
    let nyquist = width as f64 / 2.0;
    if freq > nyquist {
        return Err(StimulusError::AliasedFrequency { freq, nyquist });
    }
    let k = 2.0 * PI * freq / width as f64;
    let (s, c) = orientation.sin_cos();
    let mut raw = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            raw.push((k * (x as f64 * c + y as f64 * s) + phase).cos());
        }
    }
    Ok(raw)
}

/// Sinusoidal grating, `freq` in cycles per image width; `orientation`
/// rotates the wave vector counterclockwise from the +x axis.
///
/// A zero frequency yields the all-zero pattern.
pub fn make_harmonic(freq: f64, phase: f64, orientation: f64, width: usize, height: usize) -> Result<ContrastPattern> {
    let raw = harmonic_raw(freq, phase, orientation, width, height)?;
    match ContrastPattern::peak_normalized(width, height, raw) {
        Err(StimulusError::ZeroContrast) => Ok(ContrastPattern::flat(width, height)),
        other => other,
    }
}

/// Harmonic windowed by a Gaussian centred on the grid.
///
/// The DC component is removed in proportion to the envelope
/// (`carrier * env - k * env`), so the patch is zero-mean and still decays to
/// zero away from the centre. As `sigma` grows this converges to
/// [`make_harmonic`].
pub fn make_gabor(
    freq: f64,
    phase: f64,
    orientation: f64,
    sigma: f64,
    width: usize,
    height: usize,
) -> Result<ContrastPattern> {
    if !(sigma > 0.0) {
        return Err(StimulusError::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    let carrier = harmonic_raw(freq, phase, orientation, width, height)?;
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;
    let denom = 2.0 * sigma * sigma;
    let envelope: Vec<f64> = (0..height)
        .flat_map(|y| {
            (0..width).map(move |x| {
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                (-(dx * dx + dy * dy) / denom).exp()
            })
        })
        .collect();
    let env_sum: f64 = envelope.iter().sum();
    let weighted: f64 = carrier.iter().zip(&envelope).map(|(c, e)| c * e).sum();
    let dc = weighted / env_sum;
    let raw = carrier.iter().zip(&envelope).map(|(c, e)| (c - dc) * e).collect();
    ContrastPattern::peak_normalized(width, height, raw)
}

/// Number of pixels whose centre lies within `radius` of the grid centre.
///
/// Pixel `(i, j)` has its centre at `(i + 0.5, j + 0.5)`; the grid centre is
/// `(width / 2, height / 2)`.
fn disk_indicator(radius: f64, width: usize, height: usize) -> Vec<f64> {
    let cx = width as f64 / 2.0;
    let cy = height as f64 / 2.0;
    let r2 = radius * radius;
    let mut raw = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let dx = x as f64 + 0.5 - cx;
            let dy = y as f64 + 0.5 - cy;
            raw.push(if dx * dx + dy * dy <= r2 { 1.0 } else { 0.0 });
        }
    }
    raw
}

/// Uniform disk of `radius` pixels centred on the grid.
pub fn make_disk(radius: f64, width: usize, height: usize) -> Result<ContrastPattern> {
    check_grid(width, height)?;
    let max_radius = width.min(height) as f64 / 2.0;
    if !(radius > 0.0 && radius <= max_radius) {
        return Err(StimulusError::InvalidParameter(format!(
            "disk radius must lie in (0, {max_radius}], got {radius}"
        )));
    }
    ContrastPattern::peak_normalized(width, height, disk_indicator(radius, width, height))
}

/// Reads an 8- or 16-bit grayscale PGM/PNG and converts it to a contrast
/// image with standard deviation `target_std`.
pub fn load_contrast_image(path: impl AsRef<Path>, target_std: f64) -> Result<ContrastPattern> {
    let path = path.as_ref();
    let err = |reason: String| StimulusError::Image { path: path.display().to_string(), reason };
    let img = image::ImageReader::open(path)
        .map_err(|e| err(e.to_string()))?
        .with_guessed_format()
        .map_err(|e| err(e.to_string()))?
        .decode()
        .map_err(|e| err(e.to_string()))?;
    let luma = img.to_luma16();
    let (w, h) = luma.dimensions();
    let raw = luma.as_raw().iter().map(|&v| f64::from(v)).collect();
    ContrastPattern::std_normalized(w as usize, h as usize, raw, target_std)
}

/// Deterministic face-like luminance pattern built from Gaussian blobs
/// (head, eyes, brows, nose, mouth). `variant` jitters the feature layout.
pub fn make_synthetic_face(variant: u64, width: usize, height: usize, target_std: f64) -> Result<ContrastPattern> {
    check_grid(width, height)?;
    let mut rng = keyed_stream(variant, 0x4641_4345);
    let mut jitter = |scale: f64| (rng.random::<f64>() - 0.5) * 2.0 * scale;

    // (cx, cy, sx, sy, amplitude) in units of the grid size
    let eye_y = 0.42 + jitter(0.03);
    let eye_dx = 0.13 + jitter(0.02);
    let mouth_y = 0.70 + jitter(0.03);
    let blobs = [
        (0.5, 0.5, 0.26 + jitter(0.02), 0.34 + jitter(0.02), 1.0),
        (0.5 - eye_dx, eye_y, 0.045, 0.03, -0.9),
        (0.5 + eye_dx, eye_y, 0.045, 0.03, -0.9),
        (0.5 - eye_dx, eye_y - 0.07, 0.06, 0.015, -0.5 + jitter(0.1)),
        (0.5 + eye_dx, eye_y - 0.07, 0.06, 0.015, -0.5 + jitter(0.1)),
        (0.5, 0.56 + jitter(0.02), 0.025, 0.07, 0.35),
        (0.5, mouth_y, 0.09 + jitter(0.02), 0.025, -0.7),
    ];
    let (w, h) = (width as f64, height as f64);
    let mut raw = vec![0.0; width * height];
    for (cx, cy, sx, sy, amp) in blobs {
        for y in 0..height {
            let dy = (y as f64 + 0.5) / h - cy;
            for x in 0..width {
                let dx = (x as f64 + 0.5) / w - cx;
                raw[y * width + x] += amp * (-0.5 * (dx * dx / (sx * sx) + dy * dy / (sy * sy))).exp();
            }
        }
    }
    ContrastPattern::std_normalized(width, height, raw, target_std)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Boundary {
    #[default]
    Wrap,
    Zero,
}

/// An elementary (radius-1, binary) cellular automaton run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AutomatonSpec {
    pub rule: u32,
    pub rows: usize,
    pub cols: usize,
    pub initial_row: Vec<bool>,
    pub boundary: Boundary,
}

impl AutomatonSpec {
    pub fn new(rule: u32, rows: usize, initial_row: Vec<bool>, boundary: Boundary) -> Result<Self> {
        let spec = Self { rule, rows, cols: initial_row.len(), initial_row, boundary };
        spec.validate()?;
        Ok(spec)
    }

    /// Initial row of seeded uniform random bits.
    pub fn with_random_row(rule: u32, rows: usize, cols: usize, seed: u64, boundary: Boundary) -> Result<Self> {
        let mut rng = keyed_stream(seed, 0x4341_524f);
        let row = (0..cols).map(|_| rng.random::<bool>()).collect();
        Self::new(rule, rows, row, boundary)
    }

    /// Initial row with a single live cell in the middle.
    pub fn with_single_cell(rule: u32, rows: usize, cols: usize, boundary: Boundary) -> Result<Self> {
        let mut row = vec![false; cols];
        if cols > 0 {
            row[cols / 2] = true;
        }
        Self::new(rule, rows, row, boundary)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rule > 255 {
            return Err(StimulusError::InvalidParameter(format!("automaton rule {} outside 0..=255", self.rule)));
        }
        if self.rows == 0 || self.cols == 0 {
            return Err(StimulusError::InvalidParameter("automaton needs at least one row and column".into()));
        }
        if self.initial_row.len() != self.cols {
            return Err(StimulusError::InvalidParameter(format!(
                "initial row has {} cells, expected {}",
                self.initial_row.len(),
                self.cols
            )));
        }
        Ok(())
    }

    /// Applies the rule once to `row`.
    pub fn step(&self, row: &[bool]) -> Vec<bool> {
        let n = row.len();
        let cell = |i: isize| -> u32 {
            if (0..n as isize).contains(&i) {
                row[i as usize] as u32
            } else {
                match self.boundary {
                    Boundary::Wrap => row[i.rem_euclid(n as isize) as usize] as u32,
                    Boundary::Zero => 0,
                }
            }
        };
        (0..n as isize)
            .map(|i| {
                let idx = (cell(i - 1) << 2) | (cell(i) << 1) | cell(i + 1);
                (self.rule >> idx) & 1 == 1
            })
            .collect()
    }

    /// All rows, top to bottom, starting with the initial row.
    pub fn evolve(&self) -> Vec<Vec<bool>> {
        let mut rows = Vec::with_capacity(self.rows);
        rows.push(self.initial_row.clone());
        while rows.len() < self.rows {
            let next = self.step(rows.last().expect("non-empty"));
            rows.push(next);
        }
        rows
    }
}

/// Binary texture from an elementary automaton, std-normalized to `target_std`.
pub fn make_automaton(spec: &AutomatonSpec, target_std: f64) -> Result<ContrastPattern> {
    spec.validate()?;
    let raw = spec.evolve().into_iter().flatten().map(|b| if b { 1.0 } else { 0.0 }).collect();
    ContrastPattern::std_normalized(spec.cols, spec.rows, raw, target_std)
}

/// A fixed, seeded permutation of `block x block` tiles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPermutation {
    width: usize,
    height: usize,
    /// `source[dst]` is the source pixel copied into pixel `dst`.
    source: Vec<usize>,
}

impl BlockPermutation {
    pub fn new(width: usize, height: usize, block: usize, seed: u64) -> Result<Self> {
        if block == 0 || width == 0 || height == 0 || width % block != 0 || height % block != 0 {
            return Err(StimulusError::InvalidParameter(format!(
                "{width}x{height} grid is not divisible into {block}x{block} blocks"
            )));
        }
        let tiles_x = width / block;
        let tiles_y = height / block;
        let mut order: Vec<usize> = (0..tiles_x * tiles_y).collect();
        order.shuffle(&mut keyed_stream(seed, 0x5343_524d));

        let mut source = vec![0usize; width * height];
        for (dst_tile, &src_tile) in order.iter().enumerate() {
            let (dtx, dty) = (dst_tile % tiles_x, dst_tile / tiles_x);
            let (stx, sty) = (src_tile % tiles_x, src_tile / tiles_x);
            for by in 0..block {
                for bx in 0..block {
                    let dst = (dty * block + by) * width + dtx * block + bx;
                    let src = (sty * block + by) * width + stx * block + bx;
                    source[dst] = src;
                }
            }
        }
        Ok(Self { width, height, source })
    }

    pub fn inverse(&self) -> Self {
        let mut source = vec![0usize; self.source.len()];
        for (dst, &src) in self.source.iter().enumerate() {
            source[src] = dst;
        }
        Self { width: self.width, height: self.height, source }
    }

    /// Pixel-level map: output pixel `i` takes input pixel `source()[i]`.
    pub fn source(&self) -> &[usize] {
        &self.source
    }

    pub fn apply_slice<T: Copy>(&self, data: &[T]) -> Vec<T> {
        assert_eq!(data.len(), self.source.len(), "permutation applied to mismatched grid");
        self.source.iter().map(|&s| data[s]).collect()
    }

    pub fn apply(&self, pattern: &ContrastPattern) -> Result<ContrastPattern> {
        if pattern.width != self.width || pattern.height != self.height {
            return Err(StimulusError::InvalidParameter(format!(
                "pattern is {}x{}, permutation is {}x{}",
                pattern.width, pattern.height, self.width, self.height
            )));
        }
        Ok(ContrastPattern {
            width: self.width,
            height: self.height,
            values: self.apply_slice(&pattern.values),
            normalization: pattern.normalization,
        })
    }
}

/// Reorders `block x block` tiles of `pattern` by a permutation fixed by `seed`.
pub fn block_scramble(pattern: &ContrastPattern, block: usize, seed: u64) -> Result<ContrastPattern> {
    BlockPermutation::new(pattern.width, pattern.height, block, seed)?.apply(pattern)
}

/// Candidate patch positions inside a `width x height` image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MultiLocationLayout {
    pub width: usize,
    pub height: usize,
    pub patch_width: usize,
    pub patch_height: usize,
    /// Top-left corner of each candidate patch.
    pub locations: Vec<(usize, usize)>,
}

impl MultiLocationLayout {
    pub fn new(
        width: usize,
        height: usize,
        patch_width: usize,
        patch_height: usize,
        locations: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let layout = Self { width, height, patch_width, patch_height, locations };
        layout.validate()?;
        Ok(layout)
    }

    /// `count` slots on a near-square grid (`cols = ceil(sqrt(count))`), the
    /// patch centred in each cell. Slots fill row by row.
    pub fn grid(width: usize, height: usize, patch_width: usize, patch_height: usize, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(StimulusError::InvalidParameter("layout needs at least one location".into()));
        }
        let cols = (count as f64).sqrt().ceil() as usize;
        let rows = count.div_ceil(cols);
        let cell_w = width as f64 / cols as f64;
        let cell_h = height as f64 / rows as f64;
        if patch_width as f64 > cell_w || patch_height as f64 > cell_h {
            return Err(StimulusError::InvalidParameter(format!(
                "{patch_width}x{patch_height} patch does not fit a {cols}x{rows} grid on {width}x{height}"
            )));
        }
        let locations = (0..count)
            .map(|i| {
                let (c, r) = (i % cols, i / cols);
                let x = (c as f64 * cell_w + (cell_w - patch_width as f64) / 2.0).floor() as usize;
                let y = (r as f64 * cell_h + (cell_h - patch_height as f64) / 2.0).floor() as usize;
                (x, y)
            })
            .collect();
        Self::new(width, height, patch_width, patch_height, locations)
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_width == 0 || self.patch_height == 0 {
            return Err(StimulusError::InvalidParameter("patch dimensions must be at least 1".into()));
        }
        for &(x, y) in &self.locations {
            if x + self.patch_width > self.width || y + self.patch_height > self.height {
                return Err(StimulusError::InvalidParameter(format!("patch at ({x}, {y}) leaves the image")));
            }
        }
        for (i, &(ax, ay)) in self.locations.iter().enumerate() {
            for &(bx, by) in &self.locations[i + 1..] {
                let overlap_x = ax < bx + self.patch_width && bx < ax + self.patch_width;
                let overlap_y = ay < by + self.patch_height && by < ay + self.patch_height;
                if overlap_x && overlap_y {
                    return Err(StimulusError::InvalidParameter(format!(
                        "patches at ({ax}, {ay}) and ({bx}, {by}) overlap"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Embeds `patch` at `layout.locations[index]` in an otherwise zero pattern.
pub fn place_at_location(patch: &ContrastPattern, layout: &MultiLocationLayout, index: usize) -> Result<ContrastPattern> {
    if patch.width != layout.patch_width || patch.height != layout.patch_height {
        return Err(StimulusError::InvalidParameter(format!(
            "patch is {}x{}, layout expects {}x{}",
            patch.width, patch.height, layout.patch_width, layout.patch_height
        )));
    }
    let &(ox, oy) = layout.locations.get(index).ok_or_else(|| {
        StimulusError::InvalidParameter(format!("location index {index} out of range ({} locations)", layout.len()))
    })?;
    let mut values = vec![0.0; layout.width * layout.height];
    for y in 0..patch.height {
        let dst = (oy + y) * layout.width + ox;
        values[dst..dst + patch.width].copy_from_slice(&patch.values[y * patch.width..(y + 1) * patch.width]);
    }
    Ok(ContrastPattern {
        width: layout.width,
        height: layout.height,
        values,
        normalization: patch.normalization,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn assert_invariants(p: &ContrastPattern) {
        assert_abs_diff_eq!(p.mean(), 0.0, epsilon = 1e-9);
        match p.normalization() {
            Normalization::Peak => assert_abs_diff_eq!(p.peak_to_peak(), 2.0, epsilon = 1e-9),
            Normalization::Std { target } => assert_abs_diff_eq!(p.std(), target, epsilon = 1e-9),
        }
    }

    #[test]
    fn dc_harmonic_is_flat() {
        let p = make_harmonic(0.0, 0.0, 0.0, 16, 16).unwrap();
        assert!(p.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_harmonic_peaks_at_origin() {
        let p = make_harmonic(1.0, 0.0, 0.0, 8, 8).unwrap();
        assert_invariants(&p);
        for y in 0..8 {
            assert_abs_diff_eq!(p.get(0, y), 1.0, epsilon = 1e-12);
            for x in 0..8 {
                assert_eq!(p.get(x, y), p.get(x, 0));
            }
        }
    }

    #[test]
    fn contrast_one_harmonic_has_std_of_one_over_root_two() {
        let p = make_harmonic(1.0, 0.0, 0.0, 238, 238).unwrap();
        assert_abs_diff_eq!(p.std(), 0.7071, epsilon = 1e-4);
        assert_abs_diff_eq!(p.std(), HARMONIC_STD, epsilon = 1e-12);
    }

    #[test]
    fn harmonic_rejects_aliased_frequency() {
        assert!(matches!(
            make_harmonic(120.0, 0.0, 0.0, 238, 238),
            Err(StimulusError::AliasedFrequency { .. })
        ));
        assert!(make_harmonic(119.0, 0.3, 0.0, 238, 238).is_ok());
    }

    #[test]
    fn harmonic_zero_crossings_match_frequency() {
        for f in [1.0, 2.0, 4.0] {
            let p = make_harmonic(f, 0.1, 0.0, 64, 4).unwrap();
            let row: Vec<f64> = (0..64).map(|x| p.get(x, 2)).collect();
            let crossings = (0..64).filter(|&i| row[i].signum() != row[(i + 1) % 64].signum()).count();
            assert_eq!(crossings, 2 * f as usize, "freq {f}");
        }
    }

    #[test]
    fn vertical_orientation_varies_along_y() {
        let p = make_harmonic(2.0, 0.0, PI / 2.0, 16, 16).unwrap();
        for x in 0..16 {
            assert_abs_diff_eq!(p.get(x, 3), p.get(0, 3), epsilon = 1e-12);
        }
        assert!((p.get(0, 0) - p.get(0, 2)).abs() > 0.1);
    }

    #[test]
    fn gabor_converges_to_harmonic_for_wide_envelope() {
        let h = make_harmonic(3.0, 0.4, 0.2, 32, 32).unwrap();
        let g = make_gabor(3.0, 0.4, 0.2, 1e7, 32, 32).unwrap();
        for (a, b) in h.values().iter().zip(g.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-6);
        }
    }

    #[test]
    fn narrow_gabor_vanishes_far_from_centre() {
        let g = make_gabor(4.0, 0.3, 0.0, 1.0, 64, 64).unwrap();
        assert_invariants(&g);
        let c = 31.5;
        let peak = g.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for y in 0..64 {
            for x in 0..64 {
                let d = ((x as f64 - c).powi(2) + (y as f64 - c).powi(2)).sqrt();
                if d > 6.0 {
                    assert!(g.get(x, y).abs() < 1e-6 * peak);
                }
            }
        }
    }

    #[test]
    fn gabor_rejects_bad_sigma() {
        assert!(make_gabor(1.0, 0.0, 0.0, 0.0, 8, 8).is_err());
    }

    /// Independent lattice-point count: pixel centres `(k + 0.5)` within `r`
    /// of the grid centre, enumerated over a bounding box only.
    fn lattice_count(r: f64, w: usize, h: usize) -> usize {
        let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
        let mut n = 0;
        let lo_x = (cx - r - 1.0).floor().max(0.0) as usize;
        let hi_x = ((cx + r + 1.0).ceil() as usize).min(w);
        let lo_y = (cy - r - 1.0).floor().max(0.0) as usize;
        let hi_y = ((cy + r + 1.0).ceil() as usize).min(h);
        for j in lo_y..hi_y {
            for i in lo_x..hi_x {
                if (i as f64 + 0.5 - cx).hypot(j as f64 + 0.5 - cy) <= r {
                    n += 1;
                }
            }
        }
        n
    }

    fn inside_count(p: &ContrastPattern) -> usize {
        let hi = p.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        p.values().iter().filter(|&&v| v == hi).count()
    }

    #[test]
    fn radius_one_disk_covers_four_pixels() {
        let p = make_disk(1.0, 238, 238).unwrap();
        assert_invariants(&p);
        assert_eq!(lattice_count(1.0, 238, 238), 4);
        assert_eq!(inside_count(&p), 4);
    }

    #[test]
    fn disk_area_scales_with_radius_squared() {
        for r in [8.0, 16.0] {
            let small = inside_count(&make_disk(r, 238, 238).unwrap());
            let large = inside_count(&make_disk(2.0 * r, 238, 238).unwrap());
            assert_eq!(small, lattice_count(r, 238, 238));
            assert_eq!(large, lattice_count(2.0 * r, 238, 238));
            let ratio = large as f64 / small as f64;
            assert!((ratio - 4.0).abs() < 0.15, "r={r}: ratio {ratio}");
        }
    }

    #[test]
    fn disk_covering_everything_is_zero_contrast() {
        assert!(matches!(make_disk(1.0, 2, 2), Err(StimulusError::ZeroContrast)));
        assert!(make_disk(0.0, 16, 16).is_err());
        assert!(make_disk(9.0, 16, 16).is_err());
    }

    #[test]
    fn two_pixel_image_normalizes_by_hand() {
        let p = ContrastPattern::std_normalized(2, 1, vec![0.0, 2.0], 0.7071).unwrap();
        assert_abs_diff_eq!(p.values()[0], -0.7071, epsilon = 1e-12);
        assert_abs_diff_eq!(p.values()[1], 0.7071, epsilon = 1e-12);
    }

    #[test]
    fn std_normalization_of_zero_mean_input_is_linear_rescale() {
        let raw = vec![-3.0, 1.0, 2.0, 0.0];
        let s = population_std(&raw);
        let p = ContrastPattern::std_normalized(2, 2, raw.clone(), 0.7071).unwrap();
        for (a, b) in raw.iter().zip(p.values()) {
            assert_abs_diff_eq!(a * 0.7071 / s, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn constant_input_is_rejected() {
        assert!(matches!(
            ContrastPattern::std_normalized(2, 2, vec![5.0; 4], 1.0),
            Err(StimulusError::ZeroContrast)
        ));
    }

    #[test]
    fn rule_30_hand_evaluated_step() {
        let bits = |s: &str| s.chars().map(|c| c == '1').collect::<Vec<_>>();
        let spec = AutomatonSpec::new(30, 2, bits("00100"), Boundary::Zero).unwrap();
        assert_eq!(spec.step(&bits("00100")), bits("01110"));
    }

    #[test]
    fn wrap_boundary_reaches_across_edges() {
        let bits = |s: &str| s.chars().map(|c| c == '1').collect::<Vec<_>>();
        let spec = AutomatonSpec::new(30, 2, bits("10000"), Boundary::Wrap).unwrap();
        // neighbourhoods (wrap): 0:(0,1,0)=1 1:(1,0,0)=1 2..3:(0,0,0)=0 4:(0,0,1)=1
        assert_eq!(spec.step(&bits("10000")), bits("11001"));
    }

    #[test]
    fn identity_rule_repeats_initial_row() {
        let spec = AutomatonSpec::with_random_row(204, 20, 31, 9, Boundary::Wrap).unwrap();
        for row in spec.evolve() {
            assert_eq!(row, spec.initial_row);
        }
    }

    #[test]
    fn automaton_is_deterministic_and_normalized() {
        let spec = AutomatonSpec::with_random_row(30, 64, 64, 11, Boundary::Wrap).unwrap();
        let a = make_automaton(&spec, HARMONIC_STD).unwrap();
        let b = make_automaton(&spec.clone(), HARMONIC_STD).unwrap();
        assert_invariants(&a);
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn dead_automaton_is_zero_contrast() {
        let spec = AutomatonSpec::new(0, 8, vec![false; 8], Boundary::Wrap).unwrap();
        assert!(matches!(make_automaton(&spec, 1.0), Err(StimulusError::ZeroContrast)));
        assert!(AutomatonSpec::new(256, 8, vec![false; 8], Boundary::Wrap).is_err());
        let mut bad = AutomatonSpec::with_single_cell(30, 4, 8, Boundary::Zero).unwrap();
        bad.cols = 9;
        assert!(bad.validate().is_err());
    }

    /// Smallest rotation, so that translating patterns compare equal.
    fn canonical_rotation(row: &[bool]) -> Vec<bool> {
        (0..row.len())
            .map(|k| row[k..].iter().chain(&row[..k]).copied().collect::<Vec<_>>())
            .min()
            .unwrap()
    }

    /// Fraction of rows in the second half of the run that repeat an earlier
    /// row up to a cyclic shift.
    fn late_row_repeat_fraction(rule: u32) -> f64 {
        let spec = AutomatonSpec::with_random_row(rule, 256, 256, 5, Boundary::Wrap).unwrap();
        let rows: Vec<Vec<bool>> = spec.evolve().iter().map(|r| canonical_rotation(r)).collect();
        let late = &rows[128..];
        let repeats = late.iter().enumerate().filter(|(i, r)| rows[..128 + i].contains(r)).count();
        repeats as f64 / late.len() as f64
    }

    #[test]
    fn class_two_rules_settle_and_class_three_rules_do_not() {
        for rule in [3, 57, 76, 78] {
            assert!(late_row_repeat_fraction(rule) > 0.9, "rule {rule} should be repetitive");
        }
        for rule in [22, 30, 75, 101] {
            assert!(late_row_repeat_fraction(rule) < 0.1, "rule {rule} should stay irregular");
        }
    }

    #[test]
    fn single_block_scramble_is_identity() {
        let p = make_harmonic(1.0, 0.0, 0.0, 16, 16).unwrap();
        assert_eq!(block_scramble(&p, 16, 3).unwrap(), p);
    }

    #[test]
    fn scramble_preserves_values_and_inverts() {
        let p = make_harmonic(1.0, 0.2, 0.0, 24, 24).unwrap();
        let perm = BlockPermutation::new(24, 24, 4, 77).unwrap();
        let s = perm.apply(&p).unwrap();
        assert_ne!(s, p);
        let mut a = p.values().to_vec();
        let mut b = s.values().to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert_eq!(a, b);
        assert_eq!(perm.inverse().apply(&s).unwrap(), p);
        assert_eq!(block_scramble(&p, 4, 77).unwrap(), s);
    }

    #[test]
    fn scramble_keeps_tiles_intact() {
        let raw: Vec<f64> = (0..64).map(|i| i as f64).collect();
        let p = ContrastPattern::peak_normalized(8, 8, raw).unwrap();
        let perm = BlockPermutation::new(8, 8, 4, 1).unwrap();
        let src = perm.source();
        // within each destination tile, sources are contiguous rows of one tile
        for ty in 0..2 {
            for tx in 0..2 {
                let base = src[(ty * 4) * 8 + tx * 4];
                for by in 0..4 {
                    for bx in 0..4 {
                        assert_eq!(src[(ty * 4 + by) * 8 + tx * 4 + bx], base + by * 8 + bx);
                    }
                }
            }
        }
        assert!(perm.apply(&p).is_ok());
        assert!(BlockPermutation::new(10, 8, 4, 1).is_err());
    }

    #[test]
    fn full_size_single_location_is_identity() {
        let p = make_gabor(1.0, 0.0, 0.0, 4.0, 20, 20).unwrap();
        let layout = MultiLocationLayout::new(20, 20, 20, 20, vec![(0, 0)]).unwrap();
        assert_eq!(place_at_location(&p, &layout, 0).unwrap(), p);
        assert!(place_at_location(&p, &layout, 1).is_err());
    }

    #[test]
    fn disjoint_placements_do_not_overlap() {
        let patch = make_gabor(1.0, 0.0, 0.0, 8.0, 48, 48).unwrap();
        let layout = MultiLocationLayout::grid(238, 238, 48, 48, 16).unwrap();
        assert_eq!(layout.len(), 16);
        let placed: Vec<_> = (0..16).map(|i| place_at_location(&patch, &layout, i).unwrap()).collect();
        for i in 0..16 {
            assert_invariants(&placed[i]);
            for j in i + 1..16 {
                assert_ne!(placed[i], placed[j]);
                assert!(placed[i].values().iter().zip(placed[j].values()).all(|(a, b)| a * b == 0.0));
            }
        }
    }

    #[test]
    fn overlapping_or_escaping_layouts_are_rejected() {
        assert!(MultiLocationLayout::new(32, 32, 16, 16, vec![(0, 0), (8, 8)]).is_err());
        assert!(MultiLocationLayout::new(32, 32, 16, 16, vec![(20, 0)]).is_err());
        assert!(MultiLocationLayout::grid(32, 32, 20, 20, 4).is_err());
        for n in [1, 2, 4, 8, 16] {
            assert_eq!(MultiLocationLayout::grid(238, 238, 48, 48, n).unwrap().len(), n);
        }
    }

    #[test]
    fn synthetic_faces_are_deterministic_and_distinct() {
        let a = make_synthetic_face(1, 64, 64, HARMONIC_STD).unwrap();
        let b = make_synthetic_face(1, 64, 64, HARMONIC_STD).unwrap();
        let c = make_synthetic_face(2, 64, 64, HARMONIC_STD).unwrap();
        assert_invariants(&a);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
