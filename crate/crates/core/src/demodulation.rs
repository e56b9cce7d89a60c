//! Coherent I/Q demodulation of the recorded probe.
//!
//! Each carrier is isolated with a band-pass filter, multiplied by the
//! carrier's cosine and negative sine, low-passed at 40 Hz and decimated.
//! The 40 Hz low-pass doubles as dynamic interference elimination: body
//! motion Doppler (50–200 Hz) falls in its stopband while lip Doppler
//! does not.
//!
//! Sign convention: `I + jQ = (a/2)·exp(-jφ)` where `φ = 2π f d / ν + θ`,
//! so a lengthening path turns the baseband phasor clockwise (negative
//! frequency).

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::carrier::{carrier_phase, CarrierSet, SAMPLE_RATE_HZ};
use crate::dsp::fft::{forward_real, FftFilter};
use crate::dsp::{FirDesign, Window};
use crate::error::{Error, Result};
use crate::recording::Recording;
use std::f64::consts::TAU;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DemodConfig {
    /// Half of the band-pass width around each carrier (Δf/2).
    pub bandpass_halfwidth_hz: f64,
    /// Width of the band-pass transition bands.
    pub bandpass_transition_hz: f64,
    /// Low-pass cutoff (-6 dB point).
    pub lowpass_cutoff_hz: f64,
    /// Frequency where the low-pass stopband begins.
    pub lowpass_stop_hz: f64,
    pub downsample_factor: usize,
    /// Stopband attenuation target; picks the design window.
    pub filter_stopband_db: f64,
    /// Band every carrier must lie in.
    pub carrier_band_hz: (u32, u32),
}

impl Default for DemodConfig {
    fn default() -> Self {
        Self {
            bandpass_halfwidth_hz: 150.0,
            bandpass_transition_hz: 200.0,
            lowpass_cutoff_hz: 40.0,
            lowpass_stop_hz: 50.0,
            downsample_factor: 50,
            filter_stopband_db: 60.0,
            carrier_band_hz: (18_000, 21_000),
        }
    }
}

impl DemodConfig {
    pub fn validate(&self) -> Result<()> {
        let fs = f64::from(SAMPLE_RATE_HZ);
        if !(self.lowpass_cutoff_hz > 0.0 && self.lowpass_cutoff_hz <= self.bandpass_halfwidth_hz) {
            return Err(Error::Config(format!(
                "low-pass cutoff {} Hz must be positive and at most the band-pass half-width {} Hz",
                self.lowpass_cutoff_hz, self.bandpass_halfwidth_hz
            )));
        }
        if self.lowpass_stop_hz <= self.lowpass_cutoff_hz {
            return Err(Error::Config("low-pass stopband edge must lie above the cutoff".into()));
        }
        if self.bandpass_transition_hz <= 0.0 {
            return Err(Error::Config("band-pass transition width must be positive".into()));
        }
        if self.downsample_factor == 0 || fs / (self.downsample_factor as f64) < 2.0 * self.lowpass_cutoff_hz {
            return Err(Error::Config(format!(
                "downsample factor {} leaves less than twice the {} Hz cutoff",
                self.downsample_factor, self.lowpass_cutoff_hz
            )));
        }
        Window::for_stopband(self.filter_stopband_db)?;
        Ok(())
    }

    pub fn window(&self) -> Result<Window> {
        Window::for_stopband(self.filter_stopband_db)
    }

    pub fn baseband_rate_hz(&self) -> f64 {
        f64::from(SAMPLE_RATE_HZ) / self.downsample_factor as f64
    }

    pub fn bandpass(&self, carrier_hz: u32) -> Result<FirDesign> {
        let window = self.window()?;
        let fs = f64::from(SAMPLE_RATE_HZ);
        let taps = window.taps_for_transition(self.bandpass_transition_hz, fs);
        FirDesign::bandpass(f64::from(carrier_hz), self.bandpass_halfwidth_hz, fs, taps, window)
    }

    pub fn lowpass(&self) -> Result<FirDesign> {
        let window = self.window()?;
        let fs = f64::from(SAMPLE_RATE_HZ);
        // The transition band is centred on the cutoff.
        let transition = 2.0 * (self.lowpass_stop_hz - self.lowpass_cutoff_hz);
        let taps = window.taps_for_transition(transition, fs);
        FirDesign::lowpass(self.lowpass_cutoff_hz, fs, taps, window)
    }

    fn check_carriers(&self, carriers: &CarrierSet) -> Result<()> {
        let (lo, hi) = self.carrier_band_hz;
        if let Some(f) = carriers.frequencies_hz.iter().find(|&&f| f < lo || f > hi) {
            return Err(Error::Config(format!("carrier {f} Hz outside [{lo}, {hi}] Hz")));
        }
        if let Some(gap) = carriers.min_spacing_hz() {
            if f64::from(gap) < 2.0 * self.bandpass_halfwidth_hz {
                return Err(Error::Config(format!(
                    "carriers {gap} Hz apart overlap band-pass channels {} Hz wide",
                    2.0 * self.bandpass_halfwidth_hz
                )));
            }
        }
        Ok(())
    }
}

/// Per-carrier I/Q at the baseband rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasebandFrame {
    pub carriers: CarrierSet,
    pub i_channels: Vec<Vec<f64>>,
    pub q_channels: Vec<Vec<f64>>,
    pub baseband_rate_hz: f64,
    /// Recording time of the first sample.
    pub start_s: f64,
}

impl BasebandFrame {
    pub fn len(&self) -> usize {
        self.i_channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_carriers(&self) -> usize {
        self.i_channels.len()
    }

    pub fn time_s(&self, index: usize) -> f64 {
        self.start_s + index as f64 / self.baseband_rate_hz
    }

    /// `I + jQ` of one carrier.
    pub fn phasor(&self, carrier: usize) -> Vec<Complex64> {
        self.i_channels[carrier]
            .iter()
            .zip(&self.q_channels[carrier])
            .map(|(&i, &q)| Complex64::new(i, q))
            .collect()
    }

    /// Magnitude of the time-averaged phasor per carrier: the energy of the
    /// static (constant-phase) paths at exactly the expected frequency.
    pub fn coherent_levels(&self) -> Vec<f64> {
        (0..self.n_carriers())
            .map(|c| {
                let n = self.len().max(1) as f64;
                let sum: Complex64 = self.phasor(c).into_iter().sum();
                (sum / n).norm()
            })
            .collect()
    }
}

fn check_recording(recording: &Recording) -> Result<()> {
    if recording.sample_rate_hz != SAMPLE_RATE_HZ {
        return Err(Error::Config(format!(
            "recording sampled at {} Hz, expected {SAMPLE_RATE_HZ} Hz",
            recording.sample_rate_hz
        )));
    }
    Ok(())
}

/// Splits the recording into one band-limited channel per carrier. Outputs
/// are aligned with the input (group delay removed).
pub fn bandpass_split(recording: &Recording, carriers: &CarrierSet, config: &DemodConfig) -> Result<Vec<Vec<f64>>> {
    config.validate()?;
    config.check_carriers(carriers)?;
    check_recording(recording)?;
    if recording.samples.is_empty() {
        return Ok(vec![Vec::new(); carriers.n_tones]);
    }
    let designs = carriers
        .frequencies_hz
        .iter()
        .map(|&f| config.bandpass(f))
        .collect::<Result<Vec<_>>>()?;
    let filters: Vec<FftFilter> = designs
        .iter()
        .map(|d| FftFilter::new(&d.taps, recording.samples.len()))
        .collect();
    let spectrum = forward_real(&recording.samples, filters[0].fft_len());
    Ok(filters
        .iter()
        .map(|flt| {
            flt.apply_spectrum(&spectrum, recording.samples.len())
                .into_iter()
                .map(|c| c.re)
                .collect()
        })
        .collect())
}

/// Mixes one channel down to baseband and low-passes it, returning every
/// `downsample_factor`-th sample starting at index 0.
pub fn coherent_detect(channel: &[f64], carrier_hz: u32, config: &DemodConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    config.validate()?;
    let lowpass = config.lowpass()?;
    let filter = FftFilter::new(&lowpass.taps, channel.len());
    Ok(detect_with(channel, carrier_hz, &filter, config.downsample_factor))
}

fn detect_with(channel: &[f64], carrier_hz: u32, lowpass: &FftFilter, factor: usize) -> (Vec<f64>, Vec<f64>) {
    if channel.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let mixed: Vec<Complex64> = channel
        .iter()
        .enumerate()
        .map(|(n, &x)| {
            let w = carrier_phase(carrier_hz, n, SAMPLE_RATE_HZ);
            // x·cos(wn) + j·x·(-sin(wn))
            Complex64::new(x * w.cos(), -x * w.sin())
        })
        .collect();
    let filtered = lowpass.apply_complex(&mixed);
    filtered.iter().step_by(factor).map(|c| (c.re, c.im)).unzip()
}

/// Full demodulation. Samples whose filter support reaches past either end
/// of the recording are dropped; `start_s` records where the frame begins.
///
/// Computes the same band-pass, mix and low-pass chain as
/// [`bandpass_split`] followed by [`coherent_detect`], but in the frequency
/// domain. With a transform length that is a multiple of the sample rate,
/// mixing down an integer-Hz carrier is an exact bin shift, the band-pass
/// spectrum is two shifted copies of its prototype's, and keeping every
/// `downsample_factor`-th output sample is a fold of the spectrum.
pub fn demodulate(recording: &Recording, carriers: &CarrierSet, config: &DemodConfig) -> Result<BasebandFrame> {
    config.validate()?;
    config.check_carriers(carriers)?;
    check_recording(recording)?;
    let (first, last, edge) = frame_bounds(recording.samples.len(), carriers, config)?;
    let window = config.window()?;
    let fs = SAMPLE_RATE_HZ as usize;
    let bp_taps = window.taps_for_transition(config.bandpass_transition_hz, fs as f64);
    let proto = FirDesign::lowpass(config.bandpass_halfwidth_hz, fs as f64, bp_taps, window)?;
    let lowpass = config.lowpass()?;
    let factor = config.downsample_factor;
    let len = recording.samples.len();

    let unit = lcm(fs, factor);
    let n = (len + proto.taps.len() + lowpass.taps.len()).div_ceil(unit) * unit;
    let m = n / factor;
    let mut planner = FftPlanner::new();
    let big = planner.plan_fft_forward(n);
    let transform = |x: &[f64]| {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        buf.resize(n, Complex64::new(0.0, 0.0));
        big.process(&mut buf);
        buf
    };
    let x = transform(&recording.samples);
    let p = transform(&proto.taps);
    let l = transform(&lowpass.taps);
    let small = planner.plan_fft_inverse(m);
    let bp_delay = proto.delay();
    let delay = (bp_delay + lowpass.delay()) as f64;
    // Advance by the total group delay so output 0 lines up with input 0.
    let advance: Vec<Complex64> = (0..n)
        .map(|k| Complex64::from_polar(1.0, TAU * ((k as f64 * delay) % n as f64) / n as f64))
        .collect();

    let (mut i_channels, mut q_channels) = (Vec::new(), Vec::new());
    for &f in &carriers.frequencies_hz {
        let shift = f as usize * (n / fs);
        let w0 = TAU * f64::from(f) / fs as f64;
        let image = Complex64::from_polar(1.0, 2.0 * w0 * bp_delay as f64);
        let mut folded = vec![Complex64::new(0.0, 0.0); m];
        for k in 0..n {
            let bandpass = p[k] + image * p[(k + 2 * shift) % n];
            let y = x[(k + shift) % n] * bandpass * l[k] * advance[k];
            folded[k % m] += y;
        }
        small.process(&mut folded);
        let scale = 1.0 / n as f64;
        let (i, q): (Vec<f64>, Vec<f64>) = folded[first..=last].iter().map(|c| (c.re * scale, c.im * scale)).unzip();
        i_channels.push(i);
        q_channels.push(q);
    }
    debug_assert!(first * factor >= edge);
    Ok(BasebandFrame {
        carriers: carriers.clone(),
        i_channels,
        q_channels,
        baseband_rate_hz: config.baseband_rate_hz(),
        start_s: (first * factor) as f64 / f64::from(SAMPLE_RATE_HZ),
    })
}

fn lcm(a: usize, b: usize) -> usize {
    let (mut x, mut y) = (a, b);
    while y != 0 {
        (x, y) = (y, x % y);
    }
    a / x * b
}

/// First and last kept output index (in decimated samples) and the edge
/// length in input samples.
fn frame_bounds(len: usize, carriers: &CarrierSet, config: &DemodConfig) -> Result<(usize, usize, usize)> {
    let lowpass = config.lowpass()?;
    let bp_delay = config.bandpass(carriers.frequencies_hz[0])?.delay();
    let edge = bp_delay + lowpass.delay();
    let factor = config.downsample_factor;
    if len <= 2 * edge + factor {
        return Err(Error::Domain(format!(
            "recording of {len} samples is shorter than the {} sample filter span",
            2 * edge + factor
        )));
    }
    Ok((edge.div_ceil(factor), (len - 1 - edge) / factor, edge))
}

/// The time-domain chain, kept as an oracle for [`demodulate`].
#[cfg(test)]
fn demodulate_direct(recording: &Recording, carriers: &CarrierSet, config: &DemodConfig) -> Result<BasebandFrame> {
    let channels = bandpass_split(recording, carriers, config)?;
    let (first, last, _) = frame_bounds(recording.samples.len(), carriers, config)?;
    let factor = config.downsample_factor;
    let filter = FftFilter::new(&config.lowpass()?.taps, recording.samples.len());
    let (mut i_channels, mut q_channels) = (Vec::new(), Vec::new());
    for (channel, &f) in channels.iter().zip(&carriers.frequencies_hz) {
        let (i, q) = detect_with(channel, f, &filter, factor);
        i_channels.push(i[first..=last].to_vec());
        q_channels.push(q[first..=last].to_vec());
    }
    Ok(BasebandFrame {
        carriers: carriers.clone(),
        i_channels,
        q_channels,
        baseband_rate_hz: config.baseband_rate_hz(),
        start_s: (first * factor) as f64 / f64::from(SAMPLE_RATE_HZ),
    })
}

/// Lip displacement recovered from the baseband phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplacementTrack {
    pub rate_hz: f64,
    pub start_s: f64,
    /// Carrier-averaged one-way displacement relative to the first sample.
    pub displacement_mm: Vec<f64>,
    pub per_carrier_mm: Vec<Vec<f64>>,
}

/// Phase-based displacement estimate. Assumes the frame holds a single
/// moving path (static paths already removed, or absent).
pub fn estimate_displacement(frame: &BasebandFrame, sound_speed_mps: f64) -> Result<DisplacementTrack> {
    if frame.len() < 2 {
        return Err(Error::Estimation("frame too short to track phase".into()));
    }
    let mut per_carrier_mm = Vec::with_capacity(frame.n_carriers());
    for (c, &f) in frame.carriers.frequencies_hz.iter().enumerate() {
        let phasor = frame.phasor(c);
        let peak = phasor.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if peak == 0.0 {
            return Err(Error::Estimation(format!("no signal at {f} Hz")));
        }
        // φ = -arg(I + jQ), unwrapped.
        let mut unwrapped = Vec::with_capacity(phasor.len());
        let mut big_steps = 0usize;
        let mut prev = -phasor[0].arg();
        let mut acc = prev;
        unwrapped.push(0.0);
        for z in &phasor[1..] {
            let cur = -z.arg();
            let step = (cur - prev + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
            if step.abs() > std::f64::consts::FRAC_PI_2 {
                big_steps += 1;
            }
            acc += step;
            prev = cur;
            unwrapped.push(acc - (-phasor[0].arg()));
        }
        if big_steps * 20 > phasor.len() {
            return Err(Error::Estimation(format!(
                "phase at {f} Hz too noisy to unwrap ({big_steps} large jumps)"
            )));
        }
        let to_mm = sound_speed_mps / (std::f64::consts::TAU * f64::from(f)) / 2.0 * 1e3;
        per_carrier_mm.push(unwrapped.into_iter().map(|p| p * to_mm).collect::<Vec<f64>>());
    }
    let n = frame.len();
    let displacement_mm = (0..n)
        .map(|k| per_carrier_mm.iter().map(|c| c[k]).sum::<f64>() / per_carrier_mm.len() as f64)
        .collect();
    Ok(DisplacementTrack {
        rate_hz: frame.baseband_rate_hz,
        start_s: frame.start_s,
        displacement_mm,
        per_carrier_mm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::carrier::{synthesize_probe, SAMPLE_RATE_HZ};
    use crate::dsp::fft::forward;
    use crate::simulator::{simulate, PathKind, PathLength, PathModel, Scenario, Scene, SCENE_SCHEMA_VERSION};

    const FS: f64 = SAMPLE_RATE_HZ as f64;

    #[test]
    fn spectral_path_matches_the_time_domain_chain() {
        let carriers = CarrierSet::new(vec![18_250, 19_604, 20_999], 0.3).unwrap();
        let mut x = synthesize_probe(&carriers, 1.3).unwrap().samples;
        for (k, v) in x.iter_mut().enumerate() {
            let t = k as f64 / FS;
            *v += 0.01 * (TAU * 19_611.5 * t + 3.0 * (TAU * 4.0 * t).sin()).cos() + 1e-3 * ((k * 7919) % 101) as f64 / 101.0;
        }
        let rec = Recording::new(SAMPLE_RATE_HZ, x);
        let cfg = DemodConfig::default();
        let fast = demodulate(&rec, &carriers, &cfg).unwrap();
        let slow = demodulate_direct(&rec, &carriers, &cfg).unwrap();
        assert_eq!(fast.len(), slow.len());
        assert_eq!(fast.start_s, slow.start_s);
        for (a, b) in fast.i_channels.iter().chain(&fast.q_channels).zip(slow.i_channels.iter().chain(&slow.q_channels)) {
            for (u, v) in a.iter().zip(b) {
                assert!((u - v).abs() < 1e-10, "{u} vs {v}");
            }
        }
    }

    fn tone(f: f64, amp: f64, phase: f64, secs: f64) -> Vec<f64> {
        let n = (secs * FS) as usize;
        (0..n)
            .map(|k| amp * (std::f64::consts::TAU * f * k as f64 / FS - phase).cos())
            .collect()
    }

    fn scene(paths: Vec<PathModel>, carriers: &CarrierSet, secs: f64) -> Scene {
        Scene {
            version: SCENE_SCHEMA_VERSION,
            paths,
            carriers: carriers.clone(),
            noise_floor_db: None,
            noise_seed: 0,
            scenario: Scenario::VisualOnly,
            duration_s: secs,
            replay_source: None,
            replay_recording: None,
        }
    }

    /// Frequency of the strongest component of a complex series, found on
    /// a zero-padded FFT and refined by parabolic interpolation.
    fn peak_hz(z: &[Complex64], rate: f64) -> f64 {
        let n = (z.len() * 16).next_power_of_two();
        let spec = forward(z, n);
        let mag: Vec<f64> = spec.iter().map(|c| c.norm()).collect();
        let k = (0..n).max_by(|&a, &b| mag[a].total_cmp(&mag[b])).unwrap();
        let (l, r) = (mag[(k + n - 1) % n], mag[(k + 1) % n]);
        let delta = 0.5 * (l - r) / (l - 2.0 * mag[k] + r);
        let bin = k as f64 + delta;
        let bin = if bin > n as f64 / 2.0 { bin - n as f64 } else { bin };
        bin * rate / n as f64
    }

    fn interior_rms(x: &[f64]) -> f64 {
        let edge = 3_000;
        crate::dsp::rms(&x[edge..x.len() - edge])
    }

    #[test]
    fn bandpass_crosstalk_and_ripple() {
        let carriers = CarrierSet::new(vec![18_000, 18_300], 0.3).unwrap();
        let config = DemodConfig::default();
        let x = tone(18_300.0, 0.3, 0.4, 0.5);
        let out = bandpass_split(&Recording::new(SAMPLE_RATE_HZ, x.clone()), &carriers, &config).unwrap();
        let leak = 20.0 * (interior_rms(&out[0]) / interior_rms(&x)).log10();
        assert!(leak < -40.0, "crosstalk {leak:.1} dB");
        let ripple = 20.0 * (interior_rms(&out[1]) / interior_rms(&x)).log10();
        assert!(ripple.abs() < 1.0, "passband ripple {ripple:.2} dB");
    }

    #[test]
    fn silence_in_silence_out() {
        let carriers = CarrierSet::new(vec![18_000, 19_000, 20_000], 0.3).unwrap();
        let rec = Recording::new(SAMPLE_RATE_HZ, vec![0.0; 24_000]);
        let out = bandpass_split(&rec, &carriers, &DemodConfig::default()).unwrap();
        assert!(out.iter().flatten().all(|&v| v == 0.0));
        let (i, q) = coherent_detect(&vec![0.0; 24_000], 20_000, &DemodConfig::default()).unwrap();
        assert!(i.iter().chain(&q).all(|&v| v == 0.0));
    }

    #[test]
    fn close_carriers_are_rejected() {
        let carriers = CarrierSet::new(vec![18_000, 18_200], 0.3).unwrap();
        let rec = Recording::new(SAMPLE_RATE_HZ, vec![0.0; 4_800]);
        assert!(matches!(bandpass_split(&rec, &carriers, &DemodConfig::default()), Err(Error::Config(_))));
        let bad = DemodConfig {
            downsample_factor: 700,
            ..DemodConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = DemodConfig {
            lowpass_cutoff_hz: 200.0,
            ..DemodConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn constant_phase_gives_constant_iq() {
        let (a, phi) = (0.5, 1.1);
        let x = tone(20_000.0, a, phi, 1.0);
        let (i, q) = coherent_detect(&x, 20_000, &DemodConfig::default()).unwrap();
        // Look away from the filter edges.
        for k in 200..i.len() - 200 {
            assert!((i[k] - a / 2.0 * phi.cos()).abs() < 1e-4, "I[{k}] = {}", i[k]);
            assert!((q[k] + a / 2.0 * phi.sin()).abs() < 1e-4, "Q[{k}] = {}", q[k]);
        }
    }

    #[test]
    fn advancing_phase_is_a_negative_frequency() {
        // Phase φ(t) = 2π·10·t advancing: input cos(2π f t − φ(t)).
        let n = FS as usize * 2;
        let x: Vec<f64> = (0..n)
            .map(|k| {
                let t = k as f64 / FS;
                0.3 * (std::f64::consts::TAU * (20_000.0 - 10.0) * t).cos()
            })
            .collect();
        let carriers = CarrierSet::new(vec![20_000], 0.3).unwrap();
        let frame = demodulate(&Recording::new(SAMPLE_RATE_HZ, x), &carriers, &DemodConfig::default()).unwrap();
        let f = peak_hz(&frame.phasor(0), frame.baseband_rate_hz);
        assert!((f + 10.0).abs() < 0.05, "peak at {f}");
    }

    #[test]
    fn probe_alone_demodulates_to_the_direct_path_constant() {
        let carriers = CarrierSet::new(vec![18_500, 19_400, 20_700], 0.3).unwrap();
        let probe = synthesize_probe(&carriers, 1.0).unwrap();
        let frame = demodulate(&Recording::new(SAMPLE_RATE_HZ, probe.samples), &carriers, &DemodConfig::default()).unwrap();
        for c in 0..3 {
            for k in 0..frame.len() {
                assert!((frame.i_channels[c][k] - 0.15).abs() < 1e-4);
                assert!(frame.q_channels[c][k].abs() < 1e-4);
            }
        }
        assert!(frame.start_s > 0.0);
        assert_eq!(frame.time_s(0), frame.start_s);
    }

    #[test]
    fn moving_reflector_doppler_on_every_carrier() {
        let carriers = CarrierSet::new(vec![18_200, 19_500, 20_800], 0.3).unwrap();
        let path = PathModel {
            kind: PathKind::BodyClutter,
            amplitude: 1.0,
            path_length: PathLength::Linear { start_m: 0.5, rate_mps: 0.2 },
            sound_speed_mps: 343.0,
            system_phase_rad: 0.3,
            amplitude_slope_per_m: 0.0,
        };
        let rec = simulate(&scene(vec![path], &carriers, 2.0), 2.0).unwrap();
        let frame = demodulate(&rec, &carriers, &DemodConfig::default()).unwrap();
        for (c, &f) in carriers.frequencies_hz.iter().enumerate() {
            let expected = -f64::from(f) * 0.2 / 343.0;
            let got = peak_hz(&frame.phasor(c), frame.baseband_rate_hz);
            assert!((got - expected).abs() < 0.5, "{f} Hz: {got} vs {expected}");
        }
    }

    #[test]
    fn clutter_doppler_is_removed() {
        let carriers = CarrierSet::new(vec![19_000], 0.3).unwrap();
        // 120 Hz Doppler at 19 kHz.
        let rate = 120.0 * 343.0 / 19_000.0;
        let path = PathModel {
            kind: PathKind::BodyClutter,
            amplitude: 1.0,
            path_length: PathLength::Linear { start_m: 1.0, rate_mps: rate },
            sound_speed_mps: 343.0,
            system_phase_rad: 0.0,
            amplitude_slope_per_m: 0.0,
        };
        let rec = simulate(&scene(vec![path], &carriers, 1.5), 1.5).unwrap();
        let frame = demodulate(&rec, &carriers, &DemodConfig::default()).unwrap();
        let before = 0.3 / 2.0;
        let after = frame.phasor(0).iter().map(|z| z.norm_sqr()).sum::<f64>() / frame.len() as f64;
        let atten = 10.0 * (after / (before * before)).log10();
        assert!(atten < -40.0, "clutter attenuation {atten:.1} dB");
    }

    #[test]
    fn linearity() {
        let carriers = CarrierSet::new(vec![18_000, 20_000], 0.3).unwrap();
        let x = tone(18_010.0, 0.2, 0.0, 0.6);
        let y = tone(20_003.0, 0.1, 1.0, 0.6);
        let config = DemodConfig::default();
        let rec = |s: Vec<f64>| Recording::new(SAMPLE_RATE_HZ, s);
        let fx = demodulate(&rec(x.clone()), &carriers, &config).unwrap();
        let fy = demodulate(&rec(y.clone()), &carriers, &config).unwrap();
        let mix: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 2.0 * a - 0.5 * b).collect();
        let fm = demodulate(&rec(mix), &carriers, &config).unwrap();
        for c in 0..2 {
            for k in 0..fm.len() {
                let expect = 2.0 * fx.i_channels[c][k] - 0.5 * fy.i_channels[c][k];
                assert!((fm.i_channels[c][k] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn magnitude_ignores_system_phase() {
        let carriers = CarrierSet::new(vec![19_300], 0.3).unwrap();
        let power = |theta: f64| {
            let p = PathModel::constant(PathKind::StaticReflector, 0.5, 0.6, 343.0, theta);
            let rec = simulate(&scene(vec![p], &carriers, 0.6), 0.6).unwrap();
            let frame = demodulate(&rec, &carriers, &DemodConfig::default()).unwrap();
            frame.phasor(0)[frame.len() / 2].norm_sqr()
        };
        let (a, b) = (power(0.0), power(2.0));
        assert!((a - b).abs() / a < 0.01);
    }

    fn lip_frame(peak_mm: f64, carriers: &CarrierSet) -> (BasebandFrame, f64) {
        use crate::simulator::{CharacterGesture, LipTrajectory, SpeakerParams};
        let trajectory = LipTrajectory {
            segments: vec![CharacterGesture {
                onset_s: 0.4,
                duration_s: 0.4,
                peak_open_mm: peak_mm,
                open_fraction: 0.5,
            }],
            speaker: SpeakerParams::default(),
        };
        let path = PathModel {
            kind: PathKind::Lip,
            amplitude: 0.2,
            path_length: PathLength::Lip { base_m: 0.5, trajectory },
            sound_speed_mps: 343.0,
            system_phase_rad: 0.7,
            amplitude_slope_per_m: 0.0,
        };
        let mut s = scene(vec![path], carriers, 1.2);
        s.scenario = Scenario::Genuine;
        let rec = simulate(&s, 1.2).unwrap();
        (demodulate(&rec, carriers, &DemodConfig::default()).unwrap(), peak_mm)
    }

    #[test]
    fn lip_pulse_displacement_is_recovered() {
        let carriers = CarrierSet::new(vec![18_400, 19_600, 20_900], 0.3).unwrap();
        let (frame, peak) = lip_frame(3.0, &carriers);
        let track = estimate_displacement(&frame, 343.0).unwrap();
        let got = track.displacement_mm.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((got - peak).abs() < 0.3, "peak {got}");
        let (frame, _) = lip_frame(2.0, &carriers);
        let track = estimate_displacement(&frame, 343.0).unwrap();
        for k in 0..frame.len() {
            let v: Vec<f64> = track.per_carrier_mm.iter().map(|c| c[k]).collect();
            let spread = v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min);
            assert!(spread < 0.2, "carriers disagree by {spread} mm at {k}");
        }
    }

    #[test]
    fn motionless_displacement_is_flat_and_silence_is_an_error() {
        let carriers = CarrierSet::new(vec![19_000], 0.3).unwrap();
        let (frame, _) = lip_frame(0.0, &carriers);
        let track = estimate_displacement(&frame, 343.0).unwrap();
        assert!(track.displacement_mm.iter().all(|v| v.abs() < 0.1));
        let silent = Recording::new(SAMPLE_RATE_HZ, vec![0.0; 48_000]);
        let frame = demodulate(&silent, &carriers, &DemodConfig::default()).unwrap();
        assert!(matches!(estimate_displacement(&frame, 343.0), Err(Error::Estimation(_))));
    }
}
