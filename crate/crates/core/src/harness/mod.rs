//! End-to-end detection, metrics, dataset generation and file exports.

pub mod dataset;
pub mod eval;
pub mod export;
pub mod metrics;
pub mod pipeline;
pub mod training;
