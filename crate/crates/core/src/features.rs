//! Consistency features: fragment SNR, splicing, and the energy-band
//! centroid track of the spliced motion signal.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::{band_power, db, resample_linear};
use crate::error::{Error, Result};
use crate::interference::MotionSignal;
use crate::segmentation::{Interval, MotionFragment, SegmentationConfig};

/// Band holding lip motion in the motion signal.
pub const MOTION_BAND_HZ: (f64, f64) = (2.0, 40.0);
/// Stretches shorter than this are not trusted as a noise reference.
const MIN_NOISE_SPAN_S: f64 = 0.1;
/// SNR values are clamped to this magnitude so they stay finite.
const SNR_LIMIT_DB: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseSource {
    /// Gaps between detected activity.
    Motionless,
    /// The leading stretch of the signal, used when no gap is long enough.
    Leading,
}

/// Per-sample noise power in the motion band, averaged over channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseReference {
    pub power: f64,
    pub source: NoiseSource,
}

fn channel_band_power(channels: &[&[f64]], rate_hz: f64) -> f64 {
    if channels.is_empty() {
        return 0.0;
    }
    channels
        .iter()
        .map(|c| band_power(c, rate_hz, MOTION_BAND_HZ.0, MOTION_BAND_HZ.1))
        .sum::<f64>()
        / channels.len() as f64
}

/// Noise level from the parts of `signal` outside `active` (each widened by
/// the activity margin). Falls back to the leading calibration stretch.
pub fn noise_reference(signal: &MotionSignal, active: &[Interval], config: &SegmentationConfig) -> NoiseReference {
    let n = signal.len();
    let rate = signal.rate_hz;
    let index_of = |t: f64| ((t - signal.start_s) * rate).round().clamp(0.0, n as f64) as usize;
    let mut gaps = Vec::new();
    let mut cursor = 0usize;
    for region in active {
        let lo = index_of(region.start_s - config.vad_margin_s);
        if lo > cursor {
            gaps.push((cursor, lo));
        }
        cursor = cursor.max(index_of(region.end_s + config.vad_margin_s));
    }
    if cursor < n {
        gaps.push((cursor, n));
    }
    let min_len = (MIN_NOISE_SPAN_S * rate).round() as usize;
    gaps.retain(|&(a, b)| b - a >= min_len.max(2));

    if gaps.is_empty() {
        let lead = ((config.calibration_s * rate).round() as usize).clamp(1, n.max(1));
        let chans: Vec<&[f64]> = signal.channels().map(|c| &c[..lead.min(c.len())]).collect();
        return NoiseReference {
            power: channel_band_power(&chans, rate),
            source: NoiseSource::Leading,
        };
    }
    let (mut weighted, mut total) = (0.0, 0usize);
    for &(a, b) in &gaps {
        let chans: Vec<&[f64]> = signal.channels().map(|c| &c[a..b]).collect();
        weighted += channel_band_power(&chans, rate) * (b - a) as f64;
        total += b - a;
    }
    NoiseReference {
        power: weighted / total as f64,
        source: NoiseSource::Motionless,
    }
}

/// Motion-band SNR of a fragment's raw channels against `noise`, in dB.
pub fn fragment_snr(fragment: &MotionFragment, noise: &NoiseReference) -> f64 {
    let chans: Vec<&[f64]> = fragment.raw.iter().map(Vec::as_slice).collect();
    let signal = channel_band_power(&chans, fragment.rate_hz);
    if signal == 0.0 {
        return -SNR_LIMIT_DB;
    }
    if noise.power == 0.0 {
        return SNR_LIMIT_DB;
    }
    db(signal / noise.power).clamp(-SNR_LIMIT_DB, SNR_LIMIT_DB)
}

/// Fragments joined end to end at the baseband rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spliced {
    /// Same channel order as the fragments: `I_g` per carrier then `Q_g`.
    pub channels: Vec<Vec<f64>>,
    pub rate_hz: f64,
}

impl Spliced {
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.rate_hz
    }

    pub fn n_carriers(&self) -> usize {
        self.channels.len() / 2
    }

    /// `I_g + j Q_g` of one carrier.
    pub fn complex(&self, carrier: usize) -> Vec<Complex64> {
        let n = self.n_carriers();
        self.channels[carrier]
            .iter()
            .zip(&self.channels[carrier + n])
            .map(|(&i, &q)| Complex64::new(i, q))
            .collect()
    }
}

/// Concatenates the fragments' raw channels in time order.
pub fn splice(fragments: &[MotionFragment]) -> Result<Spliced> {
    let first = fragments
        .first()
        .ok_or_else(|| Error::Data("cannot splice an empty fragment list".into()))?;
    let mut order: Vec<&MotionFragment> = fragments.iter().collect();
    order.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    let n_channels = first.raw.len();
    if n_channels == 0 || n_channels % 2 != 0 {
        return Err(Error::Data(format!("fragments carry {n_channels} channels; expected I and Q pairs")));
    }
    let mut channels = vec![Vec::new(); n_channels];
    for f in order {
        if f.raw.len() != n_channels || f.rate_hz != first.rate_hz {
            return Err(Error::Data("fragments disagree on channel count or rate".into()));
        }
        for (out, c) in channels.iter_mut().zip(&f.raw) {
            out.extend_from_slice(c);
        }
    }
    Ok(Spliced {
        channels,
        rate_hz: first.rate_hz,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CarrierFusion {
    /// Average the per-carrier tracks.
    Mean,
    /// Place the per-carrier tracks one after another.
    Concatenate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub window_s: f64,
    pub overlap_s: f64,
    /// Normalized energies outside this range are ignored.
    pub energy_clip: (f64, f64),
    /// FFT length; the window is zero-padded up to it.
    pub nfft: usize,
    pub fusion: CarrierFusion,
    /// Points per carrier track after length normalization.
    pub track_len: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            window_s: 1.0,
            overlap_s: 0.875,
            energy_clip: (0.03, 0.99),
            nfft: 4096,
            fusion: CarrierFusion::Mean,
            track_len: 64,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.window_s > 0.0 && self.overlap_s >= 0.0 && self.overlap_s < self.window_s) {
            return Err(Error::Config(format!(
                "STFT window {} s and overlap {} s need 0 <= overlap < window",
                self.window_s, self.overlap_s
            )));
        }
        let (lo, hi) = self.energy_clip;
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::Config(format!("energy clip ({lo}, {hi}) must satisfy 0 <= lo < hi <= 1")));
        }
        if self.track_len < 2 || self.nfft == 0 {
            return Err(Error::Config("track length must be at least 2 and nfft positive".into()));
        }
        Ok(())
    }

    /// Frame length and hop in samples at `rate_hz`.
    pub fn frame_geometry(&self, rate_hz: f64) -> (usize, usize) {
        let window = (self.window_s * rate_hz).round() as usize;
        let hop = ((self.window_s - self.overlap_s) * rate_hz).round() as usize;
        (window.max(1), hop.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyBandFeatures {
    /// Fused centroid per STFT frame (Hz).
    pub centroid_track: Vec<f64>,
    pub per_carrier: Vec<Vec<f64>>,
    pub window_s: f64,
    pub overlap_s: f64,
    pub energy_clip: (f64, f64),
    /// Length-normalized fused track; the classifier input.
    pub vector: Vec<f64>,
}

/// Lowest frequency at which the cumulative energy reaches half the total.
/// Ties at exactly one half resolve to the lower frequency. Zero total
/// energy gives the first frequency.
pub fn half_energy_frequency(energy: &[f64], freqs_hz: &[f64]) -> f64 {
    let total: f64 = energy.iter().sum();
    let mut acc = 0.0;
    for (e, f) in energy.iter().zip(freqs_hz) {
        acc += e;
        if acc >= 0.5 * total {
            return *f;
        }
    }
    freqs_hz.last().copied().unwrap_or(0.0)
}

fn hann(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|k| 0.5 - 0.5 * (std::f64::consts::TAU * k as f64 / (len - 1) as f64).cos())
        .collect()
}

/// Power spectrogram of a complex series folded onto `|f|`; rows are
/// frames, columns bins `0..=nfft/2`.
pub fn folded_spectrogram(z: &[Complex64], rate_hz: f64, config: &FeatureConfig) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    config.validate()?;
    let (window, hop) = config.frame_geometry(rate_hz);
    if z.len() < window {
        return Err(Error::Data(format!(
            "{:.3} s of signal is shorter than the {:.3} s STFT window",
            z.len() as f64 / rate_hz,
            config.window_s
        )));
    }
    let nfft = config.nfft.max(window);
    let taper = hann(window);
    let mut planner = rustfft::FftPlanner::new();
    let fft = planner.plan_fft_forward(nfft);
    let half = nfft / 2;
    let frames = (z.len() - window) / hop + 1;
    let mut rows = Vec::with_capacity(frames);
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
    for f in 0..frames {
        let start = f * hop;
        buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
        for (k, w) in taper.iter().enumerate() {
            buf[k] = z[start + k] * *w;
        }
        fft.process(&mut buf);
        let row: Vec<f64> = (0..=half)
            .map(|k| {
                let pos = buf[k].norm_sqr();
                if k == 0 || 2 * k == nfft {
                    pos
                } else {
                    pos + buf[nfft - k].norm_sqr()
                }
            })
            .collect();
        rows.push(row);
    }
    let freqs = (0..=half).map(|k| k as f64 * rate_hz / nfft as f64).collect();
    Ok((rows, freqs))
}

/// Centroid track of one spectrogram after global min-max normalization
/// and energy clipping.
pub fn centroid_track(spectrogram: &[Vec<f64>], freqs_hz: &[f64], energy_clip: (f64, f64)) -> Vec<f64> {
    let (min, max) = spectrogram
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = max - min;
    spectrogram
        .iter()
        .map(|row| {
            let kept: Vec<f64> = row
                .iter()
                .map(|&v| {
                    let norm = if range > 0.0 { (v - min) / range } else { 0.0 };
                    if norm >= energy_clip.0 && norm <= energy_clip.1 {
                        norm
                    } else {
                        0.0
                    }
                })
                .collect();
            half_energy_frequency(&kept, freqs_hz)
        })
        .collect()
}

pub fn energy_band_features(spliced: &Spliced, config: &FeatureConfig) -> Result<EnergyBandFeatures> {
    config.validate()?;
    if spliced.n_carriers() == 0 {
        return Err(Error::Data("spliced signal has no channels".into()));
    }
    let per_carrier = (0..spliced.n_carriers())
        .map(|c| {
            let (spec, freqs) = folded_spectrogram(&spliced.complex(c), spliced.rate_hz, config)?;
            Ok(centroid_track(&spec, &freqs, config.energy_clip))
        })
        .collect::<Result<Vec<_>>>()?;
    let frames = per_carrier[0].len();
    let centroid_track: Vec<f64> = (0..frames)
        .map(|k| per_carrier.iter().map(|t| t[k]).sum::<f64>() / per_carrier.len() as f64)
        .collect();
    let vector = match config.fusion {
        CarrierFusion::Mean => resample_linear(&centroid_track, config.track_len),
        CarrierFusion::Concatenate => per_carrier
            .iter()
            .flat_map(|t| resample_linear(t, config.track_len))
            .collect(),
    };
    Ok(EnergyBandFeatures {
        centroid_track,
        per_carrier,
        window_s: config.window_s,
        overlap_s: config.overlap_s,
        energy_clip: config.energy_clip,
        vector,
    })
}

/// Splice then extract.
pub fn fragment_features(fragments: &[MotionFragment], config: &FeatureConfig) -> Result<EnergyBandFeatures> {
    energy_band_features(&splice(fragments)?, config)
}
