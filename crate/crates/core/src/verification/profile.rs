//! Per-user consistency profiles.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::path::Path;

use super::svm::{train_svm, SvmConfig, SvmModel};
use crate::error::{Error, Result};

pub const PROFILE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileConfig {
    pub svm: SvmConfig,
    /// FIFO cap on each sample set.
    pub max_samples: usize,
    pub min_positives: usize,
    /// Accept iff the decision value exceeds this.
    pub threshold: f64,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self {
            svm: SvmConfig::default(),
            max_samples: 100,
            min_positives: 5,
            threshold: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub version: u32,
    pub user_id: String,
    pub config: ProfileConfig,
    pub positives: VecDeque<Vec<f64>>,
    pub negatives: VecDeque<Vec<f64>>,
    pub svm: Option<SvmModel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyVerdict {
    pub pass: bool,
    pub score: f64,
}

fn capped(samples: &[Vec<f64>], cap: usize) -> VecDeque<Vec<f64>> {
    samples[samples.len().saturating_sub(cap)..].iter().cloned().collect()
}

impl UserProfile {
    pub fn is_trained(&self) -> bool {
        self.svm.is_some()
    }

    fn retrain(&mut self) -> Result<()> {
        let pos: Vec<Vec<f64>> = self.positives.iter().cloned().collect();
        let neg: Vec<Vec<f64>> = self.negatives.iter().cloned().collect();
        self.svm = Some(train_svm(&pos, &neg, &self.config.svm)?);
        Ok(())
    }

    pub fn verify(&self, features: &[f64]) -> Result<ConsistencyVerdict> {
        let svm = self
            .svm
            .as_ref()
            .ok_or_else(|| Error::State(format!("profile '{}' has no trained classifier", self.user_id)))?;
        let score = svm.decision(features)?;
        Ok(ConsistencyVerdict {
            pass: score > self.config.threshold,
            score,
        })
    }

    /// Files the attempt under positives or negatives and retrains.
    pub fn update(&mut self, features: Vec<f64>, accepted: bool) -> Result<()> {
        let set = if accepted { &mut self.positives } else { &mut self.negatives };
        set.push_back(features);
        while set.len() > self.config.max_samples {
            set.pop_front();
        }
        self.retrain()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let profile: Self = serde_json::from_str(text)?;
        if profile.version != PROFILE_SCHEMA_VERSION {
            return Err(Error::Data(format!(
                "profile schema v{}; expected v{PROFILE_SCHEMA_VERSION}",
                profile.version
            )));
        }
        Ok(profile)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Builds a profile from enrollment features against shipped negatives.
pub fn enroll(
    user_id: &str,
    samples: &[Vec<f64>],
    shipped_negatives: &[Vec<f64>],
    config: &ProfileConfig,
) -> Result<UserProfile> {
    if samples.len() < config.min_positives {
        return Err(Error::Enrollment(format!(
            "{} enrollment samples; at least {} are required",
            samples.len(),
            config.min_positives
        )));
    }
    if shipped_negatives.is_empty() {
        return Err(Error::Enrollment("no negative samples to train against".into()));
    }
    if config.max_samples < config.min_positives {
        return Err(Error::Config("profile cap is below the enrollment minimum".into()));
    }
    let mut profile = UserProfile {
        version: PROFILE_SCHEMA_VERSION,
        user_id: user_id.to_string(),
        config: config.clone(),
        positives: capped(samples, config.max_samples),
        negatives: capped(shipped_negatives, config.max_samples),
        svm: None,
    };
    profile.retrain()?;
    Ok(profile)
}

pub fn verify_consistency(profile: &UserProfile, features: &[f64]) -> Result<ConsistencyVerdict> {
    profile.verify(features)
}

pub fn update_profile(mut profile: UserProfile, features: Vec<f64>, accepted: bool) -> Result<UserProfile> {
    profile.update(features, accepted)?;
    Ok(profile)
}
