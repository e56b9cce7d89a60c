//! Randomized multi-tone probe challenges.
//!
//! A challenge is a sorted tuple of integer-grid tone frequencies inside a
//! band, with a minimum spacing between neighbours. Challenges are drawn
//! uniformly over the whole constrained tuple set by unranking a uniform
//! rank through the combinatorial number system, so one seed always maps to
//! one tuple and no draw is ever rejected.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Microphone and speaker sample rate.
pub const SAMPLE_RATE_HZ: u32 = 48_000;

/// Default per-tone amplitude `2A`; three tones stay inside full scale.
pub const DEFAULT_TONE_AMPLITUDE: f64 = 0.3;

/// The space challenges are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CarrierSpace {
    pub n_tones: usize,
    /// Inclusive band edges in Hz.
    pub band_hz: (u32, u32),
    pub min_gap_hz: u32,
    pub grid_hz: u32,
}

impl Default for CarrierSpace {
    fn default() -> Self {
        Self {
            n_tones: 3,
            band_hz: (18_000, 21_000),
            min_gap_hz: 300,
            grid_hz: 1,
        }
    }
}

impl CarrierSpace {
    fn gap_units(&self) -> u64 {
        u64::from(self.min_gap_hz.div_ceil(self.grid_hz)).max(1)
    }

    fn grid_points(&self) -> u64 {
        let (lo, hi) = self.band_hz;
        u64::from((hi - lo) / self.grid_hz) + 1
    }

    /// Size of the compressed ground set after removing the mandatory gaps,
    /// or `None` when the band cannot hold `n_tones`.
    fn compressed_len(&self) -> Option<u64> {
        if self.n_tones == 0 || self.grid_hz == 0 || self.band_hz.1 < self.band_hz.0 {
            return None;
        }
        let slack = (self.n_tones as u64 - 1) * (self.gap_units() - 1);
        self.grid_points().checked_sub(slack).filter(|&m| m >= self.n_tones as u64)
    }

    pub fn count(&self) -> u128 {
        count_valid_tuples(self.n_tones, self.band_hz, self.min_gap_hz, self.grid_hz)
    }
}

/// One challenge: the tones played for a single detection attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarrierSet {
    pub frequencies_hz: Vec<u32>,
    /// Per-tone amplitude `2A` relative to full scale.
    pub amplitude: f64,
    pub n_tones: usize,
    pub rng_seed: u64,
}

impl CarrierSet {
    /// Builds a set from explicit frequencies. Frequencies are sorted; they
    /// must be distinct and the superposition must not clip.
    pub fn new(mut frequencies_hz: Vec<u32>, amplitude: f64) -> Result<Self> {
        if frequencies_hz.is_empty() {
            return Err(Error::Constraint("a carrier set needs at least one tone".into()));
        }
        frequencies_hz.sort_unstable();
        if frequencies_hz.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Constraint("duplicate carrier frequency".into()));
        }
        let set = Self {
            n_tones: frequencies_hz.len(),
            frequencies_hz,
            amplitude,
            rng_seed: 0,
        };
        set.check_amplitude()?;
        Ok(set)
    }

    fn check_amplitude(&self) -> Result<()> {
        if !(self.amplitude > 0.0) {
            return Err(Error::Amplitude(format!("tone amplitude {} must be positive", self.amplitude)));
        }
        let peak = self.amplitude * self.n_tones as f64;
        if peak > 1.0 + 1e-12 {
            return Err(Error::Amplitude(format!(
                "{} tones at amplitude {} reach {peak:.3} and clip full scale",
                self.n_tones, self.amplitude
            )));
        }
        Ok(())
    }

    /// Checks every invariant of a challenge drawn from `space`.
    pub fn validate(&self, space: &CarrierSpace) -> Result<()> {
        if self.frequencies_hz.len() != self.n_tones || self.n_tones != space.n_tones {
            return Err(Error::Constraint(format!(
                "expected {} tones, found {}",
                space.n_tones,
                self.frequencies_hz.len()
            )));
        }
        let (lo, hi) = space.band_hz;
        if let Some(f) = self.frequencies_hz.iter().find(|&&f| f < lo || f > hi) {
            return Err(Error::Constraint(format!("carrier {f} Hz outside [{lo}, {hi}] Hz")));
        }
        for (i, a) in self.frequencies_hz.iter().enumerate() {
            for b in &self.frequencies_hz[i + 1..] {
                if a.abs_diff(*b) < space.min_gap_hz {
                    return Err(Error::Constraint(format!(
                        "carriers {a} Hz and {b} Hz closer than {} Hz",
                        space.min_gap_hz
                    )));
                }
            }
        }
        self.check_amplitude()
    }

    /// Smallest spacing between any two tones, `None` for a single tone.
    pub fn min_spacing_hz(&self) -> Option<u32> {
        self.frequencies_hz.windows(2).map(|w| w[1] - w[0]).min()
    }
}

/// Binomial coefficient, saturating at `u128::MAX`.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is always divisible by (i + 1) at this point.
        acc = match acc.checked_mul(u128::from(n - i)) {
            Some(v) => v / u128::from(i + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Exact number of sorted grid tuples of `n_tones` frequencies in `band`
/// whose neighbours are at least `min_gap` apart.
pub fn count_valid_tuples(n_tones: usize, band: (u32, u32), min_gap: u32, grid: u32) -> u128 {
    let space = CarrierSpace {
        n_tones,
        band_hz: band,
        min_gap_hz: min_gap,
        grid_hz: grid,
    };
    match space.compressed_len() {
        Some(m) => binomial(m, n_tones as u64),
        None => 0,
    }
}

/// Maps `rank` in `[0, C(m, k))` to a strictly increasing k-subset of `0..m`.
pub fn unrank_combination(mut rank: u128, m: u64, k: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(k);
    let mut upper = m;
    for i in (1..=k as u64).rev() {
        // Largest c < upper with C(c, i) <= rank.
        let (mut lo, mut hi) = (i - 1, upper - 1);
        while lo < hi {
            let mid = lo + (hi - lo).div_ceil(2);
            if binomial(mid, i) <= rank {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        rank -= binomial(lo, i);
        out.push(lo);
        upper = lo;
    }
    out.reverse();
    out
}

/// Draws a challenge uniformly from `space`, deterministically per seed.
pub fn draw_carriers(seed: u64, space: &CarrierSpace) -> Result<CarrierSet> {
    draw_carriers_with_amplitude(seed, space, DEFAULT_TONE_AMPLITUDE.min(1.0 / space.n_tones.max(1) as f64))
}

pub fn draw_carriers_with_amplitude(seed: u64, space: &CarrierSpace, amplitude: f64) -> Result<CarrierSet> {
    let m = space.compressed_len().ok_or_else(|| {
        Error::Constraint(format!(
            "{} tones with {} Hz spacing do not fit in [{}, {}] Hz",
            space.n_tones, space.min_gap_hz, space.band_hz.0, space.band_hz.1
        ))
    })?;
    let total = binomial(m, space.n_tones as u64);
    if total == u128::MAX {
        return Err(Error::Constraint("carrier space too large to enumerate".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rank = rng.random_range(0..total);
    let gap = space.gap_units();
    let frequencies_hz = unrank_combination(rank, m, space.n_tones)
        .into_iter()
        .enumerate()
        .map(|(j, g)| space.band_hz.0 + ((g + j as u64 * (gap - 1)) * u64::from(space.grid_hz)) as u32)
        .collect::<Vec<_>>();
    let set = CarrierSet {
        n_tones: space.n_tones,
        frequencies_hz,
        amplitude,
        rng_seed: seed,
    };
    set.check_amplitude()?;
    Ok(set)
}

/// The played probe signal.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeWaveform {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
    pub duration_s: f64,
}

/// `cos(2π f n / fs)` with the phase reduced exactly in integer arithmetic.
#[inline]
pub(crate) fn carrier_cos(freq_hz: u32, n: usize, sample_rate_hz: u32) -> f64 {
    carrier_phase(freq_hz, n, sample_rate_hz).cos()
}

#[inline]
pub(crate) fn carrier_phase(freq_hz: u32, n: usize, sample_rate_hz: u32) -> f64 {
    let cycles = (u64::from(freq_hz) * n as u64) % u64::from(sample_rate_hz);
    std::f64::consts::TAU * cycles as f64 / f64::from(sample_rate_hz)
}

/// Superposition of the challenge tones, all starting at zero phase.
pub fn synthesize_probe(carriers: &CarrierSet, duration_s: f64) -> Result<ProbeWaveform> {
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(Error::Domain(format!("probe duration {duration_s} s must be positive")));
    }
    carriers.check_amplitude()?;
    let len = (duration_s * f64::from(SAMPLE_RATE_HZ)).round() as usize;
    let samples = (0..len)
        .map(|n| {
            carriers
                .frequencies_hz
                .iter()
                .map(|&f| carriers.amplitude * carrier_cos(f, n, SAMPLE_RATE_HZ))
                .sum()
        })
        .collect();
    Ok(ProbeWaveform {
        samples,
        sample_rate_hz: SAMPLE_RATE_HZ,
        duration_s,
    })
}
