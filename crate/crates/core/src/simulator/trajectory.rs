//! Lip displacement trajectories.
//!
//! Each spoken character is one open/close gesture: an asymmetric raised
//! cosine that opens over `open_fraction * duration` and closes over the
//! rest. Velocity is continuous and zero at onset, apex and offset.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Baseband Doppler ceiling for lip motion.
pub const LIP_DOPPLER_LIMIT_HZ: f64 = 40.0;
/// Minimum silence between characters.
pub const MIN_CHARACTER_GAP_S: f64 = 0.1;
/// Range of mean lip speeds spanned by [`SpeakerParams::population`].
pub const POPULATION_SPEED_MM_S: (f64, f64) = (25.0, 100.0);

/// How one person moves their lips while reading their passcode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerParams {
    /// Nominal peak lip opening in millimetres.
    pub peak_open_mm: f64,
    /// Characters per second; one gesture lasts `1 / syllable_rate_hz`.
    pub syllable_rate_hz: f64,
    /// Fraction of a gesture spent opening, in (0, 1).
    pub asymmetry: f64,
    /// Seeds the per-character articulation pattern of this speaker's
    /// passcode (relative opening and pacing of each character).
    pub articulation_seed: u64,
}

impl Default for SpeakerParams {
    fn default() -> Self {
        Self {
            peak_open_mm: 6.0,
            syllable_rate_hz: 3.0,
            asymmetry: 0.45,
            articulation_seed: 0,
        }
    }
}

/// Per-character multipliers applied to the nominal gesture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Articulation {
    pub peak_scale: f64,
    pub duration_scale: f64,
    pub asymmetry_shift: f64,
}

impl SpeakerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.peak_open_mm > 0.0 && self.syllable_rate_hz > 0.0 && self.asymmetry > 0.0 && self.asymmetry < 1.0) {
            return Err(Error::Config(format!("invalid speaker parameters {self:?}")));
        }
        Ok(())
    }

    /// The articulation of character `index` of this speaker's passcode.
    pub fn articulation(&self, index: usize) -> Articulation {
        let mut rng = ChaCha8Rng::seed_from_u64(self.articulation_seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut out = Articulation {
            peak_scale: 1.0,
            duration_scale: 1.0,
            asymmetry_shift: 0.0,
        };
        for _ in 0..=index {
            out = Articulation {
                peak_scale: rng.random_range(0.6..1.4),
                duration_scale: rng.random_range(0.8..1.25),
                asymmetry_shift: rng.random_range(-0.1..0.1),
            };
        }
        out
    }

    /// Mean lip speed over a gesture: the lips travel `2 * peak_open_mm`
    /// per `1 / syllable_rate_hz`.
    pub fn mean_speed_mm_s(&self) -> f64 {
        2.0 * self.peak_open_mm * self.syllable_rate_hz
    }

    /// A population of speakers whose mean lip speeds form a geometric
    /// ladder across [`POPULATION_SPEED_MM_S`], so that neighbours differ by
    /// a fixed ratio.
    pub fn population(count: usize, seed: u64) -> Vec<SpeakerParams> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut slots: Vec<usize> = (0..count).collect();
        // Fisher-Yates so speaker ids are not ordered by speed.
        for i in (1..slots.len()).rev() {
            let j = rng.random_range(0..=i);
            slots.swap(i, j);
        }
        let (lo, hi) = POPULATION_SPEED_MM_S;
        slots
            .into_iter()
            .map(|slot| {
                let u = if count > 1 { slot as f64 / (count - 1) as f64 } else { 0.5 };
                let speed = lo * (hi / lo).powf(u);
                let syllable_rate_hz = rng.random_range(2.4..3.2);
                let asymmetry = rng.random_range(0.35..0.6);
                SpeakerParams {
                    peak_open_mm: speed / (2.0 * syllable_rate_hz),
                    syllable_rate_hz,
                    asymmetry,
                    articulation_seed: rng.random(),
                }
            })
            .collect()
    }
}

/// One character gesture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharacterGesture {
    pub onset_s: f64,
    pub duration_s: f64,
    pub peak_open_mm: f64,
    /// Fraction of the gesture spent opening.
    pub open_fraction: f64,
}

impl CharacterGesture {
    pub fn end_s(&self) -> f64 {
        self.onset_s + self.duration_s
    }

    fn phases(&self) -> (f64, f64) {
        let open = self.open_fraction * self.duration_s;
        (open, self.duration_s - open)
    }

    pub fn displacement_mm(&self, t: f64) -> f64 {
        let u = t - self.onset_s;
        if u <= 0.0 || u >= self.duration_s {
            return 0.0;
        }
        let (open, close) = self.phases();
        let pi = std::f64::consts::PI;
        if u < open {
            0.5 * self.peak_open_mm * (1.0 - (pi * u / open).cos())
        } else {
            0.5 * self.peak_open_mm * (1.0 + (pi * (u - open) / close).cos())
        }
    }

    pub fn velocity_mm_s(&self, t: f64) -> f64 {
        let u = t - self.onset_s;
        if u <= 0.0 || u >= self.duration_s {
            return 0.0;
        }
        let (open, close) = self.phases();
        let pi = std::f64::consts::PI;
        if u < open {
            0.5 * self.peak_open_mm * pi / open * (pi * u / open).sin()
        } else {
            -0.5 * self.peak_open_mm * pi / close * (pi * (u - open) / close).sin()
        }
    }

    /// Largest |velocity| over the gesture.
    pub fn max_speed_mm_s(&self) -> f64 {
        let (open, close) = self.phases();
        0.5 * self.peak_open_mm * std::f64::consts::PI / open.min(close)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryOptions {
    pub passcode_len: usize,
    /// Silence before the first character.
    pub lead_s: f64,
    pub gap_range_s: (f64, f64),
    /// Relative standard deviation of per-attempt variation.
    pub jitter: f64,
    /// Highest carrier the trajectory must stay under the Doppler limit for.
    pub max_carrier_hz: f64,
    pub sound_speed_mps: f64,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        Self {
            passcode_len: 4,
            lead_s: 0.5,
            gap_range_s: (0.15, 0.3),
            jitter: 0.05,
            max_carrier_hz: 21_000.0,
            sound_speed_mps: 343.0,
        }
    }
}

/// The lip trajectory of one attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipTrajectory {
    pub segments: Vec<CharacterGesture>,
    pub speaker: SpeakerParams,
}

/// Baseband Doppler produced by a lip moving at `speed_mm_s` (round trip
/// doubles the path-length rate).
pub fn lip_doppler_hz(speed_mm_s: f64, carrier_hz: f64, sound_speed_mps: f64) -> f64 {
    carrier_hz * 2.0 * speed_mm_s * 1e-3 / sound_speed_mps
}

impl LipTrajectory {
    /// Builds the gestures for one attempt, with per-attempt jitter drawn
    /// from `rng`.
    pub fn generate<R: Rng>(speaker: &SpeakerParams, opts: &TrajectoryOptions, rng: &mut R) -> Result<Self> {
        speaker.validate()?;
        let TrajectoryOptions {
            passcode_len,
            lead_s,
            gap_range_s,
            jitter,
            max_carrier_hz,
            sound_speed_mps,
        } = *opts;
        let jit = |rng: &mut R| {
            let z: f64 = StandardNormal.sample(rng);
            (1.0 + jitter * z.clamp(-3.0, 3.0)).max(0.2)
        };
        let speed_limit = LIP_DOPPLER_LIMIT_HZ * 0.95 * sound_speed_mps / (2.0 * max_carrier_hz) * 1e3;
        // Articulation shapes the passcode without moving the speaker's
        // mean speed.
        let arts: Vec<Articulation> = (0..passcode_len).map(|c| speaker.articulation(c)).collect();
        let norm = arts.iter().map(|a| a.peak_scale / a.duration_scale).sum::<f64>() / passcode_len.max(1) as f64;
        let mut t = lead_s;
        let mut segments = Vec::with_capacity(passcode_len);
        for art in arts {
            let duration_s = art.duration_scale * jit(rng) / speaker.syllable_rate_hz;
            let open_fraction = (speaker.asymmetry + art.asymmetry_shift).clamp(0.2, 0.8);
            let mut gesture = CharacterGesture {
                onset_s: t,
                duration_s,
                peak_open_mm: speaker.peak_open_mm * art.peak_scale / norm * jit(rng),
                open_fraction,
            };
            let speed = gesture.max_speed_mm_s();
            if speed > speed_limit {
                gesture.peak_open_mm *= speed_limit / speed;
            }
            t = gesture.end_s() + rng.random_range(gap_range_s.0..=gap_range_s.1).max(MIN_CHARACTER_GAP_S);
            segments.push(gesture);
        }
        let traj = Self {
            segments,
            speaker: speaker.clone(),
        };
        traj.validate(max_carrier_hz, sound_speed_mps)?;
        Ok(traj)
    }

    pub fn displacement_mm(&self, t: f64) -> f64 {
        self.segments.iter().map(|g| g.displacement_mm(t)).sum()
    }

    pub fn velocity_mm_s(&self, t: f64) -> f64 {
        self.segments.iter().map(|g| g.velocity_mm_s(t)).sum()
    }

    pub fn end_s(&self) -> f64 {
        self.segments.last().map_or(0.0, CharacterGesture::end_s)
    }

    pub fn max_doppler_hz(&self, carrier_hz: f64, sound_speed_mps: f64) -> f64 {
        self.segments
            .iter()
            .map(|g| lip_doppler_hz(g.max_speed_mm_s(), carrier_hz, sound_speed_mps))
            .fold(0.0, f64::max)
    }

    pub fn validate(&self, max_carrier_hz: f64, sound_speed_mps: f64) -> Result<()> {
        for g in &self.segments {
            if !(g.duration_s > 0.0 && g.peak_open_mm >= 0.0 && g.open_fraction > 0.0 && g.open_fraction < 1.0) {
                return Err(Error::Config(format!("invalid gesture {g:?}")));
            }
        }
        for w in self.segments.windows(2) {
            if w[1].onset_s - w[0].end_s() < MIN_CHARACTER_GAP_S - 1e-9 {
                return Err(Error::Config(format!(
                    "characters at {:.3} s and {:.3} s are separated by less than {MIN_CHARACTER_GAP_S} s",
                    w[0].onset_s, w[1].onset_s
                )));
            }
        }
        let doppler = self.max_doppler_hz(max_carrier_hz, sound_speed_mps);
        if doppler >= LIP_DOPPLER_LIMIT_HZ {
            return Err(Error::Config(format!(
                "lip Doppler {doppler:.1} Hz exceeds the {LIP_DOPPLER_LIMIT_HZ} Hz limit"
            )));
        }
        Ok(())
    }
}
