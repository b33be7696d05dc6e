//! Experiment orchestration: sweeps, multi-location runs, dataset export for
//! external classifiers, and scoring of their predictions.

use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

pub mod config;
pub mod dataset;
mod engine;
pub mod multiloc;
pub mod output;
pub mod pattern;
pub mod sweep;

pub use config::{ContrastGrid, Detector, ExperimentConfig, StimulusSpec, SvmSettings};
pub use dataset::{export_dataset, load_split, score_predictions, DatasetConfig, DatasetManifest, ScoreReport};
pub use engine::{CellRecord, CurveRecord, DetectorSummary, ThresholdFailure};
pub use multiloc::{run_multi_location, MultiLocationConfig, MultiLocationReport};
pub use sweep::{run_sweep, SweepReport};

pub const SOFTWARE_NAME: &str = env!("CARGO_PKG_NAME");
pub const SOFTWARE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("unsupported detector: {0}")]
    UnsupportedDetector(String),
    #[error(transparent)]
    Stimulus(#[from] crate::stimulus::StimulusError),
    #[error(transparent)]
    Optics(#[from] crate::optics::OpticsError),
    #[error(transparent)]
    Observer(#[from] crate::observer::ObserverError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error(transparent)]
    Svm(#[from] crate::svm::SvmError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("predictions: {0}")]
    Predictions(String),
    #[error("photon count {0} does not fit the u16 encoding")]
    CountOverflow(u32),
}

impl HarnessError {
    pub(crate) fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Self::Io { path: path.as_ref().to_path_buf(), source }
    }

    /// Stable machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Config(_) => "config",
            Self::UnsupportedDetector(_) => "unsupportedDetector",
            Self::Stimulus(_) => "stimulus",
            Self::Optics(_) => "optics",
            Self::Observer(_) => "observer",
            Self::Metrics(_) => "metrics",
            Self::Svm(_) => "svm",
            Self::Io { .. } => "io",
            Self::Dataset(_) => "dataset",
            Self::Predictions(_) => "predictions",
            Self::CountOverflow(_) => "countOverflow",
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SoftwareInfo {
    pub name: &'static str,
    pub version: &'static str,
}

pub fn software() -> SoftwareInfo {
    SoftwareInfo { name: SOFTWARE_NAME, version: SOFTWARE_VERSION }
}

/// Runs `f` on a pool with `workers` threads (0 = all cores).
pub(crate) fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}
