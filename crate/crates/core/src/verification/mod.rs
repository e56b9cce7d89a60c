//! Motion verification and per-user consistency verification.

pub mod network;
pub mod motion;
pub mod svm;
pub mod profile;
