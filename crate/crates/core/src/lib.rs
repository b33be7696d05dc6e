//! Photon-limited pattern detection.
//!
//! A simulated camera images contrast patterns through diffraction-limited
//! optics onto a Poisson-noise sensor. Detectors (a Poisson ideal observer and
//! a linear SVM) classify the sensor images, and signal-detection metrics turn
//! their decisions into d′ curves and contrast thresholds.

pub mod harness;
pub mod metrics;
pub mod observer;
pub mod optics;
pub mod seed;
pub mod sensor;
pub mod stimulus;
pub mod svm;
