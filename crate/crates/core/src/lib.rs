//! FMCW radar vital-sign extraction.
//!
//! The crate turns raw I/Q data cubes into heart-rate and respiration-rate
//! estimates. Processing runs in this order:
//!
//! 1. [`rangeproc`]: chirp averaging, range FFT, static clutter removal and
//!    adaptive target-bin selection.
//! 2. [`phasechain`]: I/Q DC-offset correction, phase extraction (arctangent
//!    with unwrapping, or EDACM), phase differencing, impulse suppression and
//!    RX-channel fusion.
//! 3. [`filters`]: IIR bandpass (Butterworth / elliptic) and notch filters.
//! 4. [`estimators`]: Improved FFT, coarse-to-fine (histogram and KDE),
//!    MUSIC and Prony rate estimators.
//!
//! [`pipeline`] wires the stages together for batch and sliding-window
//! operation and computes evaluation metrics. [`simulate`] synthesizes data
//! cubes with known ground truth and [`ingest`] handles file formats.

pub mod error;
pub mod estimators;
pub mod filters;
pub mod ingest;
pub mod phasechain;
pub mod pipeline;
pub mod rangeproc;
pub mod simulate;
pub mod svg;

pub use error::{Error, Result};

/// Propagation speed used for range and wavelength computations, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
