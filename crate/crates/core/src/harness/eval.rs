//! Population-level evaluation over a dataset manifest.

use serde::{Deserialize, Serialize};

use super::dataset::{Manifest, ManifestEntry, Role};
use super::metrics::{auc, compute_metrics, eer, roc_curve, MetricReport, ScoredAttempt};
use super::pipeline::{extract_features, run_detection, DetectionOutcome, PipelineConfig};
use crate::error::{Error, Result};
use crate::recording::Recording;
use crate::simulator::Scenario;
use crate::verification::motion::MotionVerifierModel;
use crate::verification::profile::{enroll, ProfileConfig, UserProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreMode {
    /// Consistency score, minus infinity after a motion or gate rejection.
    Final,
    /// Consistency score alone; needs `run_all_stages`.
    ConsistencyOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub pipeline: PipelineConfig,
    pub profile: ProfileConfig,
    pub score_mode: ScoreMode,
    /// Also score every user's genuine test attempts against every other
    /// profile, as zero-effort imposters.
    pub cross_score: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            profile: ProfileConfig::default(),
            score_mode: ScoreMode::Final,
            cross_score: true,
        }
    }
}

impl EvalConfig {
    fn score(&self, outcome: &DetectionOutcome) -> f64 {
        match self.score_mode {
            ScoreMode::Final => outcome.roc_score(),
            ScoreMode::ConsistencyOnly => outcome.consistency_only_score(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub id: String,
    pub speaker: usize,
    pub scenario: Scenario,
    pub outcome: DetectionOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserReport {
    pub user_id: String,
    pub genuine_attempts: usize,
    pub attack_attempts: usize,
    pub eer: Option<f64>,
    pub auc: Option<f64>,
    pub enrollment_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub population: MetricReport,
    pub per_user: Vec<UserReport>,
    pub attempts: Vec<AttemptRecord>,
}

fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Enrolls every speaker from their enrollment attempts, using the other
/// speakers' enrollment features as negatives.
pub fn enroll_population<F>(manifest: &Manifest, load: &F, config: &EvalConfig) -> Vec<Result<UserProfile>>
where
    F: Fn(&ManifestEntry) -> Result<Recording> + Sync,
{
    let enroll_entries: Vec<&ManifestEntry> = manifest.entries.iter().filter(|e| e.role == Role::Enroll).collect();
    let features = par_map(&enroll_entries, |e| {
        let rec = load(e)?;
        extract_features(&rec, &e.carriers, &config.pipeline, Some(e.passcode_len))
    });
    (0..manifest.speakers.len())
        .map(|s| {
            let mut own = Vec::new();
            let mut others = Vec::new();
            for (e, f) in enroll_entries.iter().zip(&features) {
                if let Ok(v) = f {
                    if e.speaker == s {
                        own.push(v.clone());
                    } else {
                        others.push(v.clone());
                    }
                }
            }
            enroll(&Manifest::user_id(s), &own, &others, &config.profile)
        })
        .collect()
}

pub fn evaluate<F>(manifest: &Manifest, load: F, model: &MotionVerifierModel, config: &EvalConfig) -> Result<EvalReport>
where
    F: Fn(&ManifestEntry) -> Result<Recording> + Sync,
{
    if config.score_mode == ScoreMode::ConsistencyOnly && !config.pipeline.run_all_stages {
        return Err(Error::Config("consistency-only scoring needs run_all_stages".into()));
    }
    let profiles = enroll_population(manifest, &load, config);
    let tests: Vec<&ManifestEntry> = manifest.entries.iter().filter(|e| e.role == Role::Test).collect();
    let attempts: Vec<AttemptRecord> = par_map(&tests, |e| {
        let outcome = match (&profiles[e.speaker], load(e)) {
            (Ok(profile), Ok(rec)) => run_detection(
                &rec,
                &e.carriers,
                model,
                profile,
                &config.pipeline,
                e.passcode_len,
                Some(e.scenario),
            ),
            (Err(err), _) => failed_outcome(e, err.to_string()),
            (_, Err(err)) => failed_outcome(e, err.to_string()),
        };
        AttemptRecord {
            id: e.id.clone(),
            speaker: e.speaker,
            scenario: e.scenario,
            outcome,
        }
    });

    let threshold = config.profile.threshold;
    let mut pooled: Vec<ScoredAttempt> = attempts
        .iter()
        .map(|a| ScoredAttempt {
            scenario: a.scenario,
            score: config.score(&a.outcome),
            accept: a.outcome.accept,
        })
        .collect();

    let mut per_user = Vec::new();
    for (s, profile) in profiles.iter().enumerate() {
        let mut genuine = Vec::new();
        let mut attack = Vec::new();
        for a in &attempts {
            if a.speaker == s {
                if a.scenario.is_attack() {
                    attack.push(config.score(&a.outcome));
                } else {
                    genuine.push(config.score(&a.outcome));
                }
            } else if config.cross_score && a.scenario == Scenario::Genuine {
                let cross = cross_score(profile.as_ref().ok(), &a.outcome, config);
                attack.push(cross);
                pooled.push(ScoredAttempt {
                    scenario: Scenario::Imposter,
                    score: cross,
                    accept: cross > threshold && a.outcome.motion_pass,
                });
            }
        }
        let roc = roc_curve(&genuine, &attack).ok();
        per_user.push(UserReport {
            user_id: Manifest::user_id(s),
            genuine_attempts: genuine.len(),
            attack_attempts: attack.len(),
            eer: roc.as_deref().map(eer),
            auc: roc.as_deref().map(auc),
            enrollment_error: profile.as_ref().err().map(|e| e.to_string()),
        });
    }
    Ok(EvalReport {
        population: compute_metrics(&pooled)?,
        per_user,
        attempts,
    })
}

fn failed_outcome(e: &ManifestEntry, error: String) -> DetectionOutcome {
    DetectionOutcome {
        scenario: Some(e.scenario),
        motion_pass: false,
        consistency_pass: false,
        accept: false,
        fragment_scores: Vec::new(),
        valid_fragments: 0,
        expected_count: e.passcode_len,
        consistency_score: None,
        carrier_levels_db: Vec::new(),
        rejected_at: None,
        error: Some(error),
        features: None,
    }
}

/// Another user's attempt scored against `profile`.
fn cross_score(profile: Option<&UserProfile>, outcome: &DetectionOutcome, config: &EvalConfig) -> f64 {
    let gated = config.score_mode == ScoreMode::Final && !outcome.motion_pass;
    match (profile, &outcome.features) {
        (Some(p), Some(f)) if !gated => p.verify(f).map_or(f64::NEG_INFINITY, |v| v.score),
        _ => f64::NEG_INFINITY,
    }
}
