//! Acoustic scene simulator.
//!
//! Renders the multipath model: every path contributes each played tone,
//! delayed by its (possibly time-varying) length and shifted by a fixed
//! system phase, plus optional white noise.

mod scene;
mod trajectory;

pub use scene::*;
pub use trajectory::*;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::carrier::{carrier_phase, SAMPLE_RATE_HZ};
use crate::error::{Error, Result};
use crate::recording::Recording;

/// Renders `scene` for `duration_s` seconds at 48 kHz.
pub fn simulate(scene: &Scene, duration_s: f64) -> Result<Recording> {
    scene.validate()?;
    if !(duration_s > 0.0) {
        return Err(Error::Domain(format!("duration {duration_s} s must be positive")));
    }
    let fs = SAMPLE_RATE_HZ;
    let len = (duration_s * f64::from(fs)).round() as usize;

    if scene.scenario == Scenario::Replay {
        let prior = scene
            .replay_recording
            .as_ref()
            .ok_or_else(|| Error::Config("replay scene has no loaded prior recording".into()))?;
        let mut samples = if prior.sample_rate_hz == fs {
            prior.samples.clone()
        } else {
            let out_len = (prior.samples.len() as f64 * f64::from(fs) / f64::from(prior.sample_rate_hz)).round() as usize;
            crate::dsp::resample_linear(&prior.samples, out_len)
        };
        samples.resize(len, 0.0);
        return Ok(Recording::new(fs, samples));
    }

    for path in &scene.paths {
        if let Some(end) = path.path_length.active_until() {
            if end > duration_s + 1e-9 {
                return Err(Error::Domain(format!(
                    "{:?} path trajectory runs to {end:.3} s, past the {duration_s:.3} s recording",
                    path.kind
                )));
            }
        }
    }

    let freqs = &scene.carriers.frequencies_hz;
    let tone_amp = scene.carriers.amplitude;
    let mut samples = vec![0.0; len];
    let tau = std::f64::consts::TAU;

    // Static paths collapse to one fixed phasor per tone.
    for &f in freqs {
        let (mut c, mut s) = (0.0, 0.0);
        for path in scene.paths.iter().filter(|p| p.path_length.is_static()) {
            let d = path.path_length.at(0.0);
            let phi = tau * f64::from(f) * d / path.sound_speed_mps + path.system_phase_rad;
            let a = tone_amp * path.amplitude;
            c += a * phi.cos();
            s += a * phi.sin();
        }
        if c == 0.0 && s == 0.0 {
            continue;
        }
        // a cos(w n - phi) = a cos(phi) cos(w n) + a sin(phi) sin(w n)
        for (n, out) in samples.iter_mut().enumerate() {
            let w = carrier_phase(f, n, fs);
            *out += c * w.cos() + s * w.sin();
        }
    }

    for path in scene.paths.iter().filter(|p| !p.path_length.is_static()) {
        let d0 = path.path_length.at(0.0);
        for (n, out) in samples.iter_mut().enumerate() {
            let t = n as f64 / f64::from(fs);
            let d = path.path_length.at(t);
            let a = tone_amp * path.amplitude * (1.0 + path.amplitude_slope_per_m * (d - d0)).max(0.0);
            for &f in freqs {
                let phi = tau * f64::from(f) * d / path.sound_speed_mps + path.system_phase_rad;
                *out += a * (carrier_phase(f, n, fs) - phi).cos();
            }
        }
    }

    if let Some(db) = scene.noise_floor_db {
        let sigma = 10f64.powf(db / 20.0);
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(scene.noise_seed);
        for out in &mut samples {
            *out += normal.sample(&mut rng);
        }
    }
    Ok(Recording::new(fs, samples))
}

pub const GROUND_TRUTH_SCHEMA_VERSION: u32 = 1;

/// Sidecar describing what actually happened in a simulated recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub version: u32,
    pub scenario: Scenario,
    /// Tones actually present in the audio (stale ones for a replay).
    pub carriers: crate::carrier::CarrierSet,
    pub duration_s: f64,
    /// Character boundaries `(start_s, end_s)`.
    pub segments: Vec<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<TrajectorySamples>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speaker: Option<SpeakerParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySamples {
    pub rate_hz: f64,
    pub displacement_mm: Vec<f64>,
}

impl GroundTruth {
    /// Ground truth for `scene`, with the lip trajectory sampled at `rate_hz`.
    pub fn of(scene: &Scene, rate_hz: f64) -> Self {
        let traj = scene.lip_trajectory();
        GroundTruth {
            version: GROUND_TRUTH_SCHEMA_VERSION,
            scenario: scene.scenario,
            carriers: scene.carriers.clone(),
            duration_s: scene.duration_s,
            segments: traj
                .map(|t| t.segments.iter().map(|g| (g.onset_s, g.end_s())).collect())
                .unwrap_or_default(),
            trajectory: traj.map(|t| {
                let n = (scene.duration_s * rate_hz).round() as usize;
                TrajectorySamples {
                    rate_hz,
                    displacement_mm: (0..n).map(|i| t.displacement_mm(i as f64 / rate_hz)).collect(),
                }
            }),
            speaker: traj.map(|t| t.speaker.clone()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::carrier::{synthesize_probe, CarrierSet};

    fn bare_scene(paths: Vec<PathModel>, carriers: CarrierSet) -> Scene {
        Scene {
            version: SCENE_SCHEMA_VERSION,
            paths,
            carriers,
            noise_floor_db: None,
            noise_seed: 0,
            scenario: Scenario::VisualOnly,
            duration_s: 0.1,
            replay_source: None,
            replay_recording: None,
        }
    }

    #[test]
    fn static_path_is_a_phase_shifted_tone() {
        let carriers = CarrierSet::new(vec![20_000], 1.0).unwrap();
        let path = PathModel::constant(PathKind::StaticReflector, 1.0, 0.5, 343.0, 0.0);
        let rec = simulate(&bare_scene(vec![path], carriers), 0.1).unwrap();
        let offset = (std::f64::consts::TAU * 20_000.0 * 0.5 / 343.0).rem_euclid(std::f64::consts::TAU);
        for (n, x) in rec.samples.iter().enumerate() {
            let t = n as f64 / 48_000.0;
            let expected = (std::f64::consts::TAU * 20_000.0 * t - offset).cos();
            assert!((x - expected).abs() < 1e-9, "n={n}");
        }
    }

    #[test]
    fn empty_scene_is_silent() {
        let carriers = CarrierSet::new(vec![19_000], 0.3).unwrap();
        let rec = simulate(&bare_scene(vec![], carriers), 0.05).unwrap();
        assert_eq!(rec.samples.len(), 2400);
        assert!(rec.samples.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn zero_length_direct_path_reproduces_the_probe() {
        let carriers = CarrierSet::new(vec![18_500, 19_300, 20_700], 0.3).unwrap();
        let path = PathModel::constant(PathKind::AirBorne, 1.0, 0.0, 343.0, 0.0);
        let rec = simulate(&bare_scene(vec![path], carriers.clone()), 0.05).unwrap();
        let probe = synthesize_probe(&carriers, 0.05).unwrap();
        for (a, b) in rec.samples.iter().zip(&probe.samples) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rms_matches_closed_form_superposition() {
        // Distinct tones are orthogonal over whole seconds; each static path
        // set per tone forms one phasor, so RMS^2 = sum_tones |phasor|^2 / 2.
        let carriers = CarrierSet::new(vec![18_200, 19_100, 20_400], 0.3).unwrap();
        let paths = vec![
            PathModel::constant(PathKind::StructureBorne, 0.6, 0.02, 2_500.0, 0.3),
            PathModel::constant(PathKind::AirBorne, 0.25, 0.13, 343.0, 1.1),
            PathModel::constant(PathKind::StaticReflector, 0.08, 0.55, 343.0, 2.0),
        ];
        let mut scene = bare_scene(paths.clone(), carriers.clone());
        scene.duration_s = 1.0;
        let rec = simulate(&scene, 1.0).unwrap();
        let mut expected = 0.0;
        for &f in &carriers.frequencies_hz {
            let (mut c, mut s) = (0.0, 0.0);
            for p in &paths {
                let phi = std::f64::consts::TAU * f64::from(f) * p.path_length.at(0.0) / p.sound_speed_mps
                    + p.system_phase_rad;
                c += 0.3 * p.amplitude * phi.cos();
                s += 0.3 * p.amplitude * phi.sin();
            }
            expected += (c * c + s * s) / 2.0;
        }
        let ratio = rec.rms() / expected.sqrt();
        assert!((ratio - 1.0).abs() < 0.01, "ratio {ratio}");
    }

    #[test]
    fn trajectory_past_duration_is_a_domain_error() {
        let carriers = CarrierSet::new(vec![18_500, 19_300, 20_700], 0.3).unwrap();
        let scene = make_genuine_scene(&SceneOptions::default(), &SpeakerParams::default(), &carriers, 1).unwrap();
        assert!(matches!(simulate(&scene, 0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn genuine_scene_shape() {
        let carriers = CarrierSet::new(vec![18_500, 19_300, 20_700], 0.3).unwrap();
        for len in [2, 4] {
            let opts = SceneOptions {
                passcode_len: len,
                ..SceneOptions::default()
            };
            let scene = make_genuine_scene(&opts, &SpeakerParams::default(), &carriers, 1).unwrap();
            assert_eq!(scene.lip_paths().count(), 1);
            assert_eq!(scene.lip_trajectory().unwrap().segments.len(), len);
            let truth = GroundTruth::of(&scene, 960.0);
            assert_eq!(truth.segments.len(), len);
        }
        let bad = SceneOptions {
            passcode_len: 7,
            ..SceneOptions::default()
        };
        assert!(make_genuine_scene(&bad, &SpeakerParams::default(), &carriers, 1).is_err());
    }

    #[test]
    fn body_clutter_doppler_is_in_band_at_every_carrier() {
        let carriers = CarrierSet::new(vec![18_000, 19_500, 21_000], 0.3).unwrap();
        let opts = SceneOptions {
            body_clutter: true,
            ..SceneOptions::default()
        };
        for seed in 0..50 {
            let scene = make_genuine_scene(&opts, &SpeakerParams::default(), &carriers, seed).unwrap();
            let clutter = scene.paths.iter().find(|p| p.kind == PathKind::BodyClutter).unwrap();
            let PathLength::Linear { rate_mps, .. } = clutter.path_length else {
                panic!("clutter path should move linearly");
            };
            for &f in &carriers.frequencies_hz {
                let doppler = f64::from(f) * rate_mps.abs() / clutter.sound_speed_mps;
                assert!((50.0..=200.0).contains(&doppler), "{doppler} Hz at {f} Hz");
            }
        }
    }

    #[test]
    fn attack_scene_prerequisites() {
        let carriers = CarrierSet::new(vec![18_500, 19_300, 20_700], 0.3).unwrap();
        let target = SpeakerParams::default();
        let opts = SceneOptions::default();
        let visual =
            make_attack_scene(AttackKind::VisualOnly, &target, &carriers, AttackInputs::default(), &opts, 3).unwrap();
        assert_eq!(visual.lip_paths().count(), 0);
        assert!(matches!(
            make_attack_scene(AttackKind::Replay, &target, &carriers, AttackInputs::default(), &opts, 3),
            Err(Error::Config(_))
        ));
        let same = AttackInputs {
            imposter: Some(target.clone()),
            ..AttackInputs::default()
        };
        assert!(matches!(
            make_attack_scene(AttackKind::Imposter, &target, &carriers, same, &opts, 3),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn replay_returns_the_prior_recording() {
        let carriers = CarrierSet::new(vec![18_500, 19_300, 20_700], 0.3).unwrap();
        let prior = Recording::new(48_000, (0..4800).map(|n| (n as f64 * 0.001).sin() * 0.5).collect());
        let inputs = AttackInputs {
            prior_recording: Some(prior.clone()),
            ..AttackInputs::default()
        };
        let scene = make_attack_scene(
            AttackKind::Replay,
            &SpeakerParams::default(),
            &carriers,
            inputs,
            &SceneOptions::default(),
            1,
        )
        .unwrap();
        let rec = simulate(&scene, scene.duration_s).unwrap();
        assert_eq!(rec, prior);
    }

    #[test]
    fn scene_json_round_trip() {
        let carriers = CarrierSet::new(vec![18_500, 19_300, 20_700], 0.3).unwrap();
        let opts = SceneOptions {
            body_clutter: true,
            ..SceneOptions::default()
        };
        let scene = make_genuine_scene(&opts, &SpeakerParams::default(), &carriers, 9).unwrap();
        let back = Scene::from_json(&scene.to_json().unwrap()).unwrap();
        assert_eq!(back, scene);
    }
}
