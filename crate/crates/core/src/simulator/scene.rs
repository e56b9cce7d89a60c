//! Physical scenes: the propagation paths between speaker and microphone.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::trajectory::{LipTrajectory, SpeakerParams, TrajectoryOptions};
use crate::carrier::CarrierSet;
use crate::error::{Error, Result};
use crate::recording::Recording;

pub const SCENE_SCHEMA_VERSION: u32 = 1;
pub const SPEED_OF_SOUND_MPS: f64 = 343.0;
/// Propagation speed used for the rigid structure-borne path.
pub const STRUCTURE_SPEED_MPS: f64 = 2_500.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathKind {
    StructureBorne,
    AirBorne,
    StaticReflector,
    Lip,
    BodyClutter,
}

/// Total (out and back) propagation path length as a function of time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum PathLength {
    Constant { meters: f64 },
    Linear { start_m: f64, rate_mps: f64 },
    /// `base_m + 2 * displacement(t)`; the lip displacement is one-way.
    Lip { base_m: f64, trajectory: LipTrajectory },
    /// Linearly interpolated samples, held at the ends.
    Sampled { rate_hz: f64, meters: Vec<f64> },
}

impl PathLength {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            PathLength::Constant { meters } => *meters,
            PathLength::Linear { start_m, rate_mps } => start_m + rate_mps * t,
            PathLength::Lip { base_m, trajectory } => base_m + 2e-3 * trajectory.displacement_mm(t),
            PathLength::Sampled { rate_hz, meters } => {
                if meters.is_empty() {
                    return 0.0;
                }
                let pos = (t * rate_hz).max(0.0);
                let i = pos.floor() as usize;
                if i + 1 >= meters.len() {
                    return meters[meters.len() - 1];
                }
                let frac = pos - i as f64;
                meters[i] + (meters[i + 1] - meters[i]) * frac
            }
        }
    }

    /// Time at which the path stops changing, if bounded.
    pub fn active_until(&self) -> Option<f64> {
        match self {
            PathLength::Lip { trajectory, .. } => Some(trajectory.end_s()),
            PathLength::Sampled { rate_hz, meters } => Some(meters.len().saturating_sub(1) as f64 / rate_hz),
            _ => None,
        }
    }

    pub fn is_static(&self) -> bool {
        matches!(self, PathLength::Constant { .. })
    }
}

/// One propagation path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathModel {
    pub kind: PathKind,
    /// Path gain relative to the played tone amplitude.
    pub amplitude: f64,
    pub path_length: PathLength,
    pub sound_speed_mps: f64,
    pub system_phase_rad: f64,
    /// Optional amplitude change per metre of path-length deviation from
    /// the value at t = 0. Zero holds the reflection amplitude constant.
    #[serde(default)]
    pub amplitude_slope_per_m: f64,
}

impl PathModel {
    pub fn constant(kind: PathKind, amplitude: f64, meters: f64, sound_speed_mps: f64, phase: f64) -> Self {
        Self {
            kind,
            amplitude,
            path_length: PathLength::Constant { meters },
            sound_speed_mps,
            system_phase_rad: phase,
            amplitude_slope_per_m: 0.0,
        }
    }

    pub fn validate(&self, duration_s: f64) -> Result<()> {
        if !(self.amplitude >= 0.0) {
            return Err(Error::Config(format!("{:?} path amplitude must be non-negative", self.kind)));
        }
        if !(self.sound_speed_mps > 0.0) {
            return Err(Error::Config(format!("{:?} path sound speed must be positive", self.kind)));
        }
        let min_len = match &self.path_length {
            PathLength::Constant { meters } => *meters,
            PathLength::Linear { start_m, rate_mps } => start_m.min(start_m + rate_mps * duration_s),
            PathLength::Lip { base_m, trajectory } => {
                let closest = trajectory
                    .segments
                    .iter()
                    .map(|g| g.peak_open_mm.min(0.0))
                    .fold(0.0, f64::min);
                base_m + 2e-3 * closest
            }
            PathLength::Sampled { meters, .. } => meters.iter().copied().fold(f64::INFINITY, f64::min),
        };
        if min_len < 0.0 {
            return Err(Error::Config(format!("{:?} path length becomes negative", self.kind)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Genuine,
    VisualOnly,
    Replay,
    Imposter,
}

impl Scenario {
    pub fn label(self) -> &'static str {
        match self {
            Scenario::Genuine => "genuine",
            Scenario::VisualOnly => "visual-only",
            Scenario::Replay => "replay",
            Scenario::Imposter => "imposter",
        }
    }

    pub fn is_attack(self) -> bool {
        self != Scenario::Genuine
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "genuine" => Ok(Scenario::Genuine),
            "visual" | "visual-only" => Ok(Scenario::VisualOnly),
            "replay" => Ok(Scenario::Replay),
            "imposter" => Ok(Scenario::Imposter),
            other => Err(Error::Config(format!("unknown scenario '{other}'"))),
        }
    }
}

/// A complete acoustic scene for one attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub version: u32,
    pub paths: Vec<PathModel>,
    /// The tones played during this attempt.
    pub carriers: CarrierSet,
    /// White-noise level in dB relative to full scale; `None` is noiseless.
    pub noise_floor_db: Option<f64>,
    pub noise_seed: u64,
    pub scenario: Scenario,
    pub duration_s: f64,
    /// Where the replayed recording lives on disk, for replay scenes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay_source: Option<String>,
    #[serde(skip)]
    pub replay_recording: Option<Recording>,
}

impl Scene {
    pub fn from_json(text: &str) -> Result<Self> {
        let scene: Scene = serde_json::from_str(text)?;
        if scene.version != SCENE_SCHEMA_VERSION {
            return Err(Error::Data(format!(
                "scene schema version {} is not supported (expected {SCENE_SCHEMA_VERSION})",
                scene.version
            )));
        }
        Ok(scene)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn lip_paths(&self) -> impl Iterator<Item = &PathModel> {
        self.paths.iter().filter(|p| p.kind == PathKind::Lip)
    }

    pub fn lip_trajectory(&self) -> Option<&LipTrajectory> {
        self.lip_paths().find_map(|p| match &p.path_length {
            PathLength::Lip { trajectory, .. } => Some(trajectory),
            _ => None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0) {
            return Err(Error::Config("scene duration must be positive".into()));
        }
        let lips = self.lip_paths().count();
        match self.scenario {
            Scenario::Genuine | Scenario::Imposter if lips != 1 => {
                return Err(Error::Config(format!(
                    "{} scene needs exactly one lip path, found {lips}",
                    self.scenario
                )));
            }
            Scenario::VisualOnly if lips != 0 => {
                return Err(Error::Config("visual-only scene must not contain a lip path".into()));
            }
            Scenario::Replay if self.replay_recording.is_none() && self.replay_source.is_none() => {
                return Err(Error::Config("replay scene must reference a prior recording".into()));
            }
            _ => {}
        }
        for path in &self.paths {
            path.validate(self.duration_s)?;
        }
        Ok(())
    }
}

/// Knobs for the scene builders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneOptions {
    pub passcode_len: usize,
    pub lead_s: f64,
    pub tail_s: f64,
    pub gap_range_s: (f64, f64),
    pub jitter: f64,
    pub body_clutter: bool,
    pub noise_floor_db: Option<f64>,
    pub structure_gain: f64,
    pub air_gain: f64,
    pub reflector_gain: f64,
    pub lip_gain: f64,
    pub clutter_gain: f64,
}

impl Default for SceneOptions {
    fn default() -> Self {
        Self {
            passcode_len: 4,
            lead_s: 0.5,
            tail_s: 0.5,
            gap_range_s: (0.15, 0.3),
            jitter: 0.05,
            body_clutter: false,
            noise_floor_db: Some(-70.0),
            structure_gain: 0.6,
            air_gain: 0.25,
            reflector_gain: 0.08,
            lip_gain: 0.04,
            clutter_gain: 0.02,
        }
    }
}

fn static_paths(opts: &SceneOptions, rng: &mut ChaCha8Rng) -> Vec<PathModel> {
    let tau = std::f64::consts::TAU;
    vec![
        PathModel::constant(
            PathKind::StructureBorne,
            opts.structure_gain,
            0.02,
            STRUCTURE_SPEED_MPS,
            rng.random_range(0.0..tau),
        ),
        PathModel::constant(
            PathKind::AirBorne,
            opts.air_gain,
            rng.random_range(0.10..0.15),
            SPEED_OF_SOUND_MPS,
            rng.random_range(0.0..tau),
        ),
        PathModel::constant(
            PathKind::StaticReflector,
            opts.reflector_gain,
            rng.random_range(0.4..0.7),
            SPEED_OF_SOUND_MPS,
            rng.random_range(0.0..tau),
        ),
    ]
}

/// A receding body whose Doppler lies inside 50..200 Hz at every carrier.
pub fn body_clutter_path(carriers: &CarrierSet, gain: f64, rng: &mut impl Rng) -> Result<PathModel> {
    let f_min = f64::from(*carriers.frequencies_hz.first().unwrap_or(&18_000));
    let f_max = f64::from(*carriers.frequencies_hz.last().unwrap_or(&21_000));
    let lo = 55.0 * SPEED_OF_SOUND_MPS / f_min;
    let hi = 195.0 * SPEED_OF_SOUND_MPS / f_max;
    if lo > hi {
        return Err(Error::Config("carriers span too wide for a 50-200 Hz clutter Doppler".into()));
    }
    Ok(PathModel {
        kind: PathKind::BodyClutter,
        amplitude: gain,
        path_length: PathLength::Linear {
            start_m: rng.random_range(0.8..1.2),
            rate_mps: rng.random_range(lo..=hi),
        },
        sound_speed_mps: SPEED_OF_SOUND_MPS,
        system_phase_rad: rng.random_range(0.0..std::f64::consts::TAU),
        amplitude_slope_per_m: 0.0,
    })
}

fn lip_path(
    speaker: &SpeakerParams,
    carriers: &CarrierSet,
    opts: &SceneOptions,
    rng: &mut ChaCha8Rng,
) -> Result<(PathModel, f64)> {
    let traj_opts = TrajectoryOptions {
        passcode_len: opts.passcode_len,
        lead_s: opts.lead_s,
        gap_range_s: opts.gap_range_s,
        jitter: opts.jitter,
        max_carrier_hz: f64::from(*carriers.frequencies_hz.last().unwrap_or(&21_000)),
        sound_speed_mps: SPEED_OF_SOUND_MPS,
    };
    let trajectory = LipTrajectory::generate(speaker, &traj_opts, rng)?;
    let end = trajectory.end_s();
    let path = PathModel {
        kind: PathKind::Lip,
        amplitude: opts.lip_gain,
        path_length: PathLength::Lip {
            base_m: rng.random_range(0.4..0.7),
            trajectory,
        },
        sound_speed_mps: SPEED_OF_SOUND_MPS,
        system_phase_rad: rng.random_range(0.0..std::f64::consts::TAU),
        amplitude_slope_per_m: 0.0,
    };
    Ok((path, end))
}

/// A live user reading a `passcode_len`-character passcode.
pub fn make_genuine_scene(
    opts: &SceneOptions,
    speaker: &SpeakerParams,
    carriers: &CarrierSet,
    seed: u64,
) -> Result<Scene> {
    if !(2..=6).contains(&opts.passcode_len) {
        return Err(Error::Config(format!(
            "passcode length {} outside 2..=6",
            opts.passcode_len
        )));
    }
    live_scene(opts, speaker, carriers, seed, Scenario::Genuine)
}

fn live_scene(
    opts: &SceneOptions,
    speaker: &SpeakerParams,
    carriers: &CarrierSet,
    seed: u64,
    scenario: Scenario,
) -> Result<Scene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut paths = static_paths(opts, &mut rng);
    let (lip, end) = lip_path(speaker, carriers, opts, &mut rng)?;
    paths.push(lip);
    if opts.body_clutter {
        paths.push(body_clutter_path(carriers, opts.clutter_gain, &mut rng)?);
    }
    let scene = Scene {
        version: SCENE_SCHEMA_VERSION,
        paths,
        carriers: carriers.clone(),
        noise_floor_db: opts.noise_floor_db,
        noise_seed: rng.random(),
        scenario,
        duration_s: end + opts.tail_s,
        replay_source: None,
        replay_recording: None,
    };
    scene.validate()?;
    Ok(scene)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    /// A photo, video or 3D-projected face with no moving lips in front of the phone.
    VisualOnly,
    /// A recording from an earlier attempt played back.
    Replay,
    /// Someone else reading the passcode.
    Imposter,
}

impl AttackKind {
    pub fn scenario(self) -> Scenario {
        match self {
            AttackKind::VisualOnly => Scenario::VisualOnly,
            AttackKind::Replay => Scenario::Replay,
            AttackKind::Imposter => Scenario::Imposter,
        }
    }
}

impl std::str::FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "visual" | "visual-only" => Ok(AttackKind::VisualOnly),
            "replay" => Ok(AttackKind::Replay),
            "imposter" => Ok(AttackKind::Imposter),
            other => Err(Error::Config(format!("unknown attack kind '{other}'"))),
        }
    }
}

/// What an attack needs besides the target.
#[derive(Debug, Clone, Default)]
pub struct AttackInputs {
    /// Replay: the earlier recording being played back.
    pub prior_recording: Option<Recording>,
    /// Imposter: the attacker's own lip behaviour.
    pub imposter: Option<SpeakerParams>,
}

/// Builds an attack scene against `target` for the fresh challenge `carriers`.
pub fn make_attack_scene(
    kind: AttackKind,
    target: &SpeakerParams,
    carriers: &CarrierSet,
    inputs: AttackInputs,
    opts: &SceneOptions,
    seed: u64,
) -> Result<Scene> {
    match kind {
        AttackKind::VisualOnly => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut paths = static_paths(opts, &mut rng);
            if opts.body_clutter {
                paths.push(body_clutter_path(carriers, opts.clutter_gain, &mut rng)?);
            }
            // Same timing budget as a live attempt of this length.
            let nominal = opts.passcode_len as f64 / target.syllable_rate_hz
                + (opts.passcode_len.saturating_sub(1)) as f64 * 0.5 * (opts.gap_range_s.0 + opts.gap_range_s.1);
            let scene = Scene {
                version: SCENE_SCHEMA_VERSION,
                paths,
                carriers: carriers.clone(),
                noise_floor_db: opts.noise_floor_db,
                noise_seed: rng.random(),
                scenario: Scenario::VisualOnly,
                duration_s: opts.lead_s + nominal + opts.tail_s,
                replay_source: None,
                replay_recording: None,
            };
            scene.validate()?;
            Ok(scene)
        }
        AttackKind::Replay => {
            let prior = inputs
                .prior_recording
                .ok_or_else(|| Error::Config("replay attack needs a prior recording".into()))?;
            let scene = Scene {
                version: SCENE_SCHEMA_VERSION,
                paths: Vec::new(),
                carriers: carriers.clone(),
                noise_floor_db: None,
                noise_seed: seed,
                scenario: Scenario::Replay,
                duration_s: prior.duration_s(),
                replay_source: None,
                replay_recording: Some(prior),
            };
            scene.validate()?;
            Ok(scene)
        }
        AttackKind::Imposter => {
            let imposter = inputs
                .imposter
                .ok_or_else(|| Error::Config("imposter attack needs the attacker's speaker parameters".into()))?;
            if &imposter == target {
                return Err(Error::Config("imposter speaker parameters equal the target's".into()));
            }
            if !(2..=6).contains(&opts.passcode_len) {
                return Err(Error::Config(format!("passcode length {} outside 2..=6", opts.passcode_len)));
            }
            live_scene(opts, &imposter, carriers, seed, Scenario::Imposter)
        }
    }
}
