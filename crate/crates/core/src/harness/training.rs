//! Labelled fragment sets for the motion verifier.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::pipeline::{analyze, PipelineConfig};
use crate::carrier::{draw_carriers, CarrierSpace};
use crate::dsp::resample_linear;
use crate::error::Result;
use crate::features::{fragment_snr, noise_reference};
use crate::interference::MotionSignal;
use crate::segmentation::{MotionFragment, FRAGMENT_LEN};
use crate::simulator::{
    make_attack_scene, make_genuine_scene, simulate, AttackInputs, AttackKind, SceneOptions, SpeakerParams,
    POPULATION_SPEED_MM_S,
};
use crate::verification::motion::{train_motion_verifier, MotionVerifierModel, TrainConfig, TrainingReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionSetConfig {
    pub positives: usize,
    pub negatives: usize,
    pub seed: u64,
    pub scene: SceneOptions,
    /// Fraction of scenes with a moving body in the background.
    pub clutter_fraction: f64,
    /// Length range of the motionless windows used as negatives.
    pub negative_window_s: (f64, f64),
}

impl Default for MotionSetConfig {
    fn default() -> Self {
        Self {
            positives: 500,
            negatives: 500,
            seed: 0,
            scene: SceneOptions::default(),
            clutter_fraction: 0.5,
            negative_window_s: (0.15, 0.6),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct FragmentSet {
    pub positives: Vec<MotionFragment>,
    pub negatives: Vec<MotionFragment>,
}

impl FragmentSet {
    /// Moves every `k`-th sample of each class into a held-out set.
    pub fn split_every(self, k: usize) -> (FragmentSet, FragmentSet) {
        let split = |v: Vec<MotionFragment>| {
            let (mut keep, mut held) = (Vec::new(), Vec::new());
            for (i, f) in v.into_iter().enumerate() {
                if k > 0 && i % k == k - 1 {
                    held.push(f);
                } else {
                    keep.push(f);
                }
            }
            (keep, held)
        };
        let (pt, ph) = split(self.positives);
        let (nt, nh) = split(self.negatives);
        (
            FragmentSet { positives: pt, negatives: nt },
            FragmentSet { positives: ph, negatives: nh },
        )
    }
}

/// A speaker drawn from a wider range than any evaluation population.
pub fn random_speaker(rng: &mut impl Rng) -> SpeakerParams {
    let (lo, hi) = POPULATION_SPEED_MM_S;
    let speed = (lo * 0.8) * ((hi * 1.2) / (lo * 0.8)).powf(rng.random::<f64>());
    let syllable_rate_hz = rng.random_range(2.2..3.4);
    SpeakerParams {
        peak_open_mm: speed / (2.0 * syllable_rate_hz),
        syllable_rate_hz,
        asymmetry: rng.random_range(0.3..0.65),
        articulation_seed: rng.random(),
    }
}

/// Cuts `[start, end)` samples of `signal` into a fragment.
pub fn window_fragment(signal: &MotionSignal, start: usize, end: usize, config: &PipelineConfig) -> MotionFragment {
    let raw: Vec<Vec<f64>> = signal.channels().map(|c| c[start..end].to_vec()).collect();
    let mut fragment = MotionFragment {
        start_s: signal.time_s(start),
        end_s: signal.time_s(end),
        channels: raw.iter().map(|c| resample_linear(c, FRAGMENT_LEN)).collect(),
        snr_db: 0.0,
        raw,
        rate_hz: signal.rate_hz,
    };
    fragment.snr_db = fragment_snr(&fragment, &noise_reference(signal, &[], &config.segmentation));
    fragment
}

/// Positives are segmented characters from live scenes; negatives are
/// random windows of scenes with a still face (optionally with a moving
/// body behind it).
pub fn motion_training_set(set: &MotionSetConfig, config: &PipelineConfig) -> Result<FragmentSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(set.seed);
    let space = CarrierSpace::default();
    let mut out = FragmentSet::default();

    while out.positives.len() < set.positives {
        let speaker = random_speaker(&mut rng);
        let carriers = draw_carriers(rng.random(), &space)?;
        let opts = SceneOptions {
            body_clutter: rng.random_bool(set.clutter_fraction),
            ..set.scene.clone()
        };
        let scene = make_genuine_scene(&opts, &speaker, &carriers, rng.random())?;
        let rec = simulate(&scene, scene.duration_s)?;
        let analysis = analyze(&rec, &carriers, config, Some(opts.passcode_len))?;
        for f in analysis.kept {
            if out.positives.len() < set.positives {
                out.positives.push(f);
            }
        }
    }

    let (lo, hi) = set.negative_window_s;
    while out.negatives.len() < set.negatives {
        let target = random_speaker(&mut rng);
        let carriers = draw_carriers(rng.random(), &space)?;
        let opts = SceneOptions {
            body_clutter: rng.random_bool(set.clutter_fraction),
            ..set.scene.clone()
        };
        let scene = make_attack_scene(
            AttackKind::VisualOnly,
            &target,
            &carriers,
            AttackInputs::default(),
            &opts,
            rng.random(),
        )?;
        let rec = simulate(&scene, scene.duration_s)?;
        let analysis = analyze(&rec, &carriers, config, None)?;
        let signal = &analysis.motion;
        let rate = signal.rate_hz;
        for _ in 0..4 {
            if out.negatives.len() >= set.negatives {
                break;
            }
            let len = ((rng.random_range(lo..hi) * rate) as usize).clamp(2, signal.len());
            let start = rng.random_range(0..=signal.len() - len);
            out.negatives.push(window_fragment(signal, start, start + len, config));
        }
    }
    Ok(out)
}

/// Builds a training set and fits a verifier on it.
pub fn train_default_motion_model(
    set: &MotionSetConfig,
    pipeline: &PipelineConfig,
    train: &TrainConfig,
) -> Result<(MotionVerifierModel, TrainingReport)> {
    let data = motion_training_set(set, pipeline)?;
    train_motion_verifier(&data.positives, &data.negatives, train)
}
