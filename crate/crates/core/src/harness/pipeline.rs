//! One detection attempt, end to end.

use serde::{Deserialize, Serialize};

use crate::carrier::CarrierSet;
use crate::demodulation::{demodulate, BasebandFrame, DemodConfig};
use crate::dsp::db;
use crate::error::{Error, Result};
use crate::features::{fragment_features, FeatureConfig};
use crate::interference::{detrend, gradient, DetrendConfig, MotionSignal};
use crate::recording::Recording;
use crate::segmentation::{segment_characters, MotionFragment, Segmentation, SegmentationConfig};
use crate::simulator::Scenario;
use crate::verification::motion::{decide_motion_at, MotionVerifierModel};
use crate::verification::profile::UserProfile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub demod: DemodConfig,
    pub detrend: DetrendConfig,
    pub segmentation: SegmentationConfig,
    pub features: FeatureConfig,
    /// Fragments below this SNR are dropped before verification.
    pub snr_gate_db: f64,
    /// Every challenge tone must arrive at least this loud, relative to a
    /// unit-gain path at the played amplitude.
    pub carrier_gate_db: f64,
    /// A fragment counts as live lip motion above this probability.
    pub motion_threshold: f64,
    /// Run the consistency stage even after a motion rejection.
    pub run_all_stages: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            demod: DemodConfig::default(),
            detrend: DetrendConfig::default(),
            segmentation: SegmentationConfig::default(),
            features: FeatureConfig::default(),
            snr_gate_db: 6.0,
            carrier_gate_db: -20.0,
            motion_threshold: 0.5,
            run_all_stages: false,
        }
    }
}

/// Intermediate products of the signal-processing front end.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub frame: BasebandFrame,
    pub motion: MotionSignal,
    pub segmentation: Segmentation,
    /// Fragments that passed the SNR gate.
    pub kept: Vec<MotionFragment>,
    pub carrier_levels_db: Vec<f64>,
}

impl Analysis {
    pub fn carriers_present(&self, config: &PipelineConfig) -> bool {
        self.carrier_levels_db.iter().all(|&l| l >= config.carrier_gate_db)
    }
}

/// Level of each challenge tone's static component, in dB relative to a
/// single unit-gain path.
pub fn carrier_levels_db(frame: &BasebandFrame) -> Vec<f64> {
    let reference = (frame.carriers.amplitude / 2.0).powi(2);
    frame
        .coherent_levels()
        .into_iter()
        .map(|l| db(l * l / reference).max(-300.0))
        .collect()
}

pub fn analyze(
    recording: &Recording,
    carriers: &CarrierSet,
    config: &PipelineConfig,
    expected_count: Option<usize>,
) -> Result<Analysis> {
    let frame = demodulate(recording, carriers, &config.demod)?;
    let motion = detrend(&gradient(&frame)?, &config.detrend)?;
    let segmentation = segment_characters(&motion, &config.segmentation, expected_count)?;
    let kept = segmentation
        .fragments
        .iter()
        .filter(|f| f.snr_db >= config.snr_gate_db)
        .cloned()
        .collect();
    Ok(Analysis {
        carrier_levels_db: carrier_levels_db(&frame),
        frame,
        motion,
        segmentation,
        kept,
    })
}

/// Consistency features of a recording, for enrollment.
pub fn extract_features(
    recording: &Recording,
    carriers: &CarrierSet,
    config: &PipelineConfig,
    expected_count: Option<usize>,
) -> Result<Vec<f64>> {
    let analysis = analyze(recording, carriers, config, expected_count)?;
    if !analysis.carriers_present(config) {
        return Err(Error::Data("challenge tones missing from the recording".into()));
    }
    Ok(fragment_features(&analysis.kept, &config.features)?.vector)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    CarrierGate,
    Motion,
    Consistency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionOutcome {
    pub scenario: Option<Scenario>,
    pub motion_pass: bool,
    pub consistency_pass: bool,
    /// `motion_pass && consistency_pass`.
    pub accept: bool,
    /// Per-fragment live-motion probabilities.
    pub fragment_scores: Vec<f64>,
    pub valid_fragments: usize,
    pub expected_count: usize,
    pub consistency_score: Option<f64>,
    pub carrier_levels_db: Vec<f64>,
    pub rejected_at: Option<Stage>,
    /// Set when a stage failed; the attempt then counts as a reject.
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<f64>>,
}

impl DetectionOutcome {
    fn empty(scenario: Option<Scenario>, expected_count: usize) -> Self {
        Self {
            scenario,
            motion_pass: false,
            consistency_pass: false,
            accept: false,
            fragment_scores: Vec::new(),
            valid_fragments: 0,
            expected_count,
            consistency_score: None,
            carrier_levels_db: Vec::new(),
            rejected_at: None,
            error: None,
            features: None,
        }
    }

    /// Score used for ROC sweeps: the consistency decision value, or minus
    /// infinity when the attempt never got a usable one.
    pub fn roc_score(&self) -> f64 {
        match self.consistency_score {
            Some(s) if self.motion_pass => s,
            _ => f64::NEG_INFINITY,
        }
    }

    /// Consistency score regardless of the motion decision.
    pub fn consistency_only_score(&self) -> f64 {
        self.consistency_score.unwrap_or(f64::NEG_INFINITY)
    }
}

/// Runs the full check: carrier gate, segmentation, motion verification,
/// features and the consistency decision. Stage errors become rejects.
pub fn run_detection(
    recording: &Recording,
    carriers: &CarrierSet,
    motion_model: &MotionVerifierModel,
    profile: &UserProfile,
    config: &PipelineConfig,
    expected_count: usize,
    scenario: Option<Scenario>,
) -> DetectionOutcome {
    let mut out = DetectionOutcome::empty(scenario, expected_count);
    if let Err(e) = detect_into(&mut out, recording, carriers, motion_model, profile, config) {
        out.error = Some(e.to_string());
        out.accept = false;
    }
    debug_assert!(out.accept == (out.motion_pass && out.consistency_pass));
    out
}

fn detect_into(
    out: &mut DetectionOutcome,
    recording: &Recording,
    carriers: &CarrierSet,
    motion_model: &MotionVerifierModel,
    profile: &UserProfile,
    config: &PipelineConfig,
) -> Result<()> {
    let analysis = analyze(recording, carriers, config, Some(out.expected_count))?;
    out.carrier_levels_db = analysis.carrier_levels_db.clone();
    if !analysis.carriers_present(config) {
        out.rejected_at = Some(Stage::CarrierGate);
        return Ok(());
    }

    out.fragment_scores = analysis
        .kept
        .iter()
        .map(|f| motion_model.score(f))
        .collect::<Result<_>>()?;
    let verdict = decide_motion_at(out.fragment_scores.clone(), out.expected_count, config.motion_threshold);
    out.valid_fragments = verdict.valid_count;
    out.motion_pass = verdict.pass;
    if !out.motion_pass {
        out.rejected_at = Some(Stage::Motion);
        if !config.run_all_stages {
            return Ok(());
        }
    }

    let features = fragment_features(&analysis.kept, &config.features)?.vector;
    let verdict = profile.verify(&features)?;
    out.features = Some(features);
    out.consistency_score = Some(verdict.score);
    out.consistency_pass = verdict.pass;
    if !out.consistency_pass && out.rejected_at.is_none() {
        out.rejected_at = Some(Stage::Consistency);
    }
    out.accept = out.motion_pass && out.consistency_pass;
    Ok(())
}
