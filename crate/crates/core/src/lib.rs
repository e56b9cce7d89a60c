//! Acoustic lip-motion liveness detection.
//!
//! The phone plays a few randomized near-ultrasonic tones while the user
//! reads a passcode. Reflections off the moving lips phase-modulate the
//! tones; the pipeline recovers that modulation and decides whether it came
//! from a live speaker, and whether it is consistent with the enrolled user.
//!
//! Stages, in order:
//! - [`carrier`]: challenge generation and probe synthesis
//! - [`simulator`]: multipath scene rendering for ground-truth recordings
//! - [`demodulation`]: band-pass split, coherent I/Q detection, 40 Hz low-pass
//! - [`interference`]: static-path removal by differentiation and detrending
//! - [`segmentation`]: per-character fragment extraction
//! - [`features`]: SNR gating and energy-band centroid features
//! - [`verification`]: motion network and per-user consistency SVM
//! - [`harness`]: end-to-end detection, metrics, datasets and exports

pub mod carrier;
pub mod demodulation;
pub mod dsp;
pub mod error;
pub mod features;
pub mod harness;
pub mod interference;
pub mod recording;
pub mod segmentation;
pub mod simulator;
pub mod verification;

pub use error::{Error, Result};
