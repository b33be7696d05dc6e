//! Debug rendering of a stimulus pattern to an 8-bit PGM.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder};
use serde::{Deserialize, Serialize};

use super::config::{read_json, StimulusSpec};
use super::{HarnessError, Result};
use crate::stimulus::ContrastPattern;

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PatternRequest {
    pub stimulus: StimulusSpec,
    pub width: usize,
    pub height: usize,
    /// Display contrast: grey level is `127.5 · (1 + contrast · value)`, clipped.
    #[serde(default = "one")]
    pub contrast: f64,
}

impl PatternRequest {
    pub fn load(path: &Path) -> Result<Self> {
        let mut req: Self = read_json(path)?;
        if let Some(dir) = path.parent() {
            req.stimulus.resolve_paths(dir);
        }
        Ok(req)
    }
}

pub fn to_grey(pattern: &ContrastPattern, contrast: f64) -> Vec<u8> {
    pattern.values().iter().map(|v| (127.5 * (1.0 + contrast * v)).round().clamp(0.0, 255.0) as u8).collect()
}

/// Renders the request and writes a binary PGM to `out`.
pub fn write_pattern_pgm(req: &PatternRequest, out: &Path) -> Result<ContrastPattern> {
    let pattern = req.stimulus.build(req.width, req.height)?;
    let grey = to_grey(&pattern, req.contrast);
    let file = File::create(out).map_err(|e| HarnessError::io(out, e))?;
    PnmEncoder::new(BufWriter::new(file))
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(&grey, req.width as u32, req.height as u32, ExtendedColorType::L8)
        .map_err(|e| HarnessError::io(out, std::io::Error::other(e)))?;
    Ok(pattern)
}
