//! Deterministic synthetic datasets: WAVs, ground-truth sidecars and a manifest.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::carrier::{draw_carriers, CarrierSet, CarrierSpace};
use crate::error::{Error, Result};
use crate::recording::Recording;
use crate::simulator::{
    make_attack_scene, make_genuine_scene, simulate, AttackInputs, AttackKind, GroundTruth, Scenario, Scene,
    SceneOptions, SpeakerParams,
};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Fractions of attempts per scenario. They need not sum to one; they are
/// normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMix {
    pub genuine: f64,
    pub visual_only: f64,
    pub replay: f64,
    pub imposter: f64,
}

impl ScenarioMix {
    pub fn genuine_only() -> Self {
        Self {
            genuine: 1.0,
            visual_only: 0.0,
            replay: 0.0,
            imposter: 0.0,
        }
    }

    fn weights(&self) -> [(Scenario, f64); 4] {
        [
            (Scenario::Genuine, self.genuine),
            (Scenario::VisualOnly, self.visual_only),
            (Scenario::Replay, self.replay),
            (Scenario::Imposter, self.imposter),
        ]
    }

    /// Attempts per scenario out of `total`, by largest remainder.
    pub fn counts(&self, total: usize) -> Result<Vec<(Scenario, usize)>> {
        let w = self.weights();
        if w.iter().any(|(_, x)| !(*x >= 0.0 && x.is_finite())) {
            return Err(Error::Config("scenario fractions must be finite and non-negative".into()));
        }
        let sum: f64 = w.iter().map(|(_, x)| x).sum();
        if !(sum > 0.0) {
            return Err(Error::Config("scenario mix is empty".into()));
        }
        let exact: Vec<f64> = w.iter().map(|(_, x)| x / sum * total as f64).collect();
        let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
        let mut order: Vec<usize> = (0..4).collect();
        order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
        let short = total - counts.iter().sum::<usize>();
        for &k in order.iter().take(short) {
            counts[k] += 1;
        }
        Ok(w.iter().map(|(s, _)| *s).zip(counts).collect())
    }
}

impl Default for ScenarioMix {
    fn default() -> Self {
        Self {
            genuine: 0.7,
            visual_only: 0.1,
            replay: 0.1,
            imposter: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub speakers: usize,
    pub attempts_per_speaker: usize,
    /// The first this-many genuine attempts of each speaker are marked for
    /// enrollment.
    pub enroll_per_speaker: usize,
    pub mix: ScenarioMix,
    pub seed: u64,
    pub scene: SceneOptions,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            speakers: 10,
            attempts_per_speaker: 25,
            enroll_per_speaker: 5,
            mix: ScenarioMix::default(),
            seed: 0,
            scene: SceneOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Enroll,
    Test,
}

/// The stale attempt a replay plays back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplaySource {
    pub scene_seed: u64,
    pub carriers: CarrierSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Index of the targeted (or, when genuine, speaking) user.
    pub speaker: usize,
    pub role: Role,
    pub scenario: Scenario,
    pub scene_seed: u64,
    /// The fresh challenge for this attempt.
    pub carriers: CarrierSet,
    pub passcode_len: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attacker: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay: Option<ReplaySource>,
    pub wav: String,
    pub sidecar: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub spec: DatasetSpec,
    pub speakers: Vec<SpeakerParams>,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn user_id(speaker: usize) -> String {
        format!("user{speaker:03}")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let m: Manifest = serde_json::from_str(&std::fs::read_to_string(dir.as_ref().join(MANIFEST_FILE))?)?;
        if m.version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Data(format!("manifest schema v{}; expected v{MANIFEST_SCHEMA_VERSION}", m.version)));
        }
        Ok(m)
    }

    pub fn count(&self, scenario: Scenario) -> usize {
        self.entries.iter().filter(|e| e.scenario == scenario).count()
    }
}

/// Lays out every attempt and its seeds without rendering anything.
pub fn plan_dataset(spec: &DatasetSpec) -> Result<Manifest> {
    if spec.speakers == 0 || spec.attempts_per_speaker == 0 {
        return Err(Error::Config("speaker and attempt counts must be at least 1".into()));
    }
    let total = spec.speakers * spec.attempts_per_speaker;
    let counts = spec.mix.counts(total)?;
    if spec.speakers < 2 && counts.iter().any(|&(s, n)| s == Scenario::Imposter && n > 0) {
        return Err(Error::Config("imposter attempts need at least two speakers".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let speakers = SpeakerParams::population(spec.speakers, rng.random());

    // Enrollment slots come first and are always genuine; the rest of the
    // scenario pool is shuffled over the remaining slots.
    let genuine_total = counts.iter().find(|(s, _)| *s == Scenario::Genuine).map_or(0, |c| c.1);
    let enroll_each = spec.enroll_per_speaker.min(spec.attempts_per_speaker);
    let enroll_each = enroll_each.min(genuine_total / spec.speakers);
    let mut pool: Vec<Scenario> = counts
        .iter()
        .flat_map(|&(s, n)| {
            let n = if s == Scenario::Genuine { n - enroll_each * spec.speakers } else { n };
            std::iter::repeat_n(s, n)
        })
        .collect();
    pool.shuffle(&mut rng);
    let mut pool = pool.into_iter();

    let space = CarrierSpace::default();
    let mut entries = Vec::with_capacity(total);
    for speaker in 0..spec.speakers {
        for attempt in 0..spec.attempts_per_speaker {
            let (role, scenario) = if attempt < enroll_each {
                (Role::Enroll, Scenario::Genuine)
            } else {
                (Role::Test, pool.next().expect("pool sized to the test slots"))
            };
            let carriers = draw_carriers(rng.random(), &space)?;
            let scene_seed = rng.random();
            let attacker = (scenario == Scenario::Imposter).then(|| {
                let k = rng.random_range(0..spec.speakers - 1);
                if k >= speaker {
                    k + 1
                } else {
                    k
                }
            });
            let replay = if scenario == Scenario::Replay {
                Some(ReplaySource {
                    scene_seed: rng.random(),
                    carriers: draw_carriers(rng.random(), &space)?,
                })
            } else {
                None
            };
            let id = format!("{}-{attempt:03}", Manifest::user_id(speaker));
            entries.push(ManifestEntry {
                wav: format!("audio/{id}.wav"),
                sidecar: format!("audio/{id}.truth.json"),
                id,
                speaker,
                role,
                scenario,
                scene_seed,
                carriers,
                passcode_len: spec.scene.passcode_len,
                attacker,
                replay,
            });
        }
    }
    Ok(Manifest {
        version: MANIFEST_SCHEMA_VERSION,
        spec: spec.clone(),
        speakers,
        entries,
    })
}

/// Rebuilds the scene of one entry and renders it as stored on disk.
pub fn render_entry(manifest: &Manifest, entry: &ManifestEntry) -> Result<(Scene, Recording, GroundTruth)> {
    let opts = &manifest.spec.scene;
    let target = manifest
        .speakers
        .get(entry.speaker)
        .ok_or_else(|| Error::Data(format!("entry {} names unknown speaker {}", entry.id, entry.speaker)))?;
    let scene = match entry.scenario {
        Scenario::Genuine => make_genuine_scene(opts, target, &entry.carriers, entry.scene_seed)?,
        Scenario::VisualOnly => make_attack_scene(
            AttackKind::VisualOnly,
            target,
            &entry.carriers,
            AttackInputs::default(),
            opts,
            entry.scene_seed,
        )?,
        Scenario::Imposter => {
            let attacker = entry
                .attacker
                .and_then(|a| manifest.speakers.get(a))
                .ok_or_else(|| Error::Data(format!("imposter entry {} has no attacker", entry.id)))?;
            make_attack_scene(
                AttackKind::Imposter,
                target,
                &entry.carriers,
                AttackInputs {
                    imposter: Some(attacker.clone()),
                    ..AttackInputs::default()
                },
                opts,
                entry.scene_seed,
            )?
        }
        Scenario::Replay => {
            let source = entry
                .replay
                .as_ref()
                .ok_or_else(|| Error::Data(format!("replay entry {} has no source", entry.id)))?;
            let prior_scene = make_genuine_scene(opts, target, &source.carriers, source.scene_seed)?;
            let prior = simulate(&prior_scene, prior_scene.duration_s)?.quantized();
            make_attack_scene(
                AttackKind::Replay,
                target,
                &entry.carriers,
                AttackInputs {
                    prior_recording: Some(prior),
                    ..AttackInputs::default()
                },
                opts,
                entry.scene_seed,
            )?
        }
    };
    let recording = simulate(&scene, scene.duration_s)?.quantized();
    let mut truth = GroundTruth::of(&scene, crate::demodulation::DemodConfig::default().baseband_rate_hz());
    if let Some(source) = &entry.replay {
        truth.carriers = source.carriers.clone();
    }
    Ok((scene, recording, truth))
}

/// Plans and renders a dataset into `dir`.
pub fn generate_dataset(spec: &DatasetSpec, dir: impl AsRef<Path>) -> Result<Manifest> {
    let dir = dir.as_ref();
    let manifest = plan_dataset(spec)?;
    std::fs::create_dir_all(dir.join("audio"))?;
    let write = |entry: &ManifestEntry| -> Result<()> {
        let (_, recording, truth) = render_entry(&manifest, entry)?;
        recording.write_wav(dir.join(&entry.wav))?;
        std::fs::write(dir.join(&entry.sidecar), serde_json::to_string_pretty(&truth)?)?;
        Ok(())
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        manifest.entries.par_iter().try_for_each(write)?;
    }
    #[cfg(not(feature = "parallel"))]
    manifest.entries.iter().try_for_each(write)?;
    std::fs::write(dir.join(MANIFEST_FILE), manifest.to_json()?)?;
    Ok(manifest)
}
