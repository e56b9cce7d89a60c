//! Linear-phase FIR design by the window method.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Window {
    Hamming,
    Blackman,
}

impl Window {
    /// Smallest window whose first sidelobe meets `stopband_db`.
    pub fn for_stopband(stopband_db: f64) -> Result<Self> {
        if stopband_db <= Window::Hamming.stopband_db() {
            Ok(Window::Hamming)
        } else if stopband_db <= Window::Blackman.stopband_db() {
            Ok(Window::Blackman)
        } else {
            Err(Error::Config(format!(
                "no supported window reaches {stopband_db} dB stopband attenuation"
            )))
        }
    }

    /// Typical minimum stopband attenuation of a windowed-sinc design.
    pub fn stopband_db(self) -> f64 {
        match self {
            Window::Hamming => 53.0,
            Window::Blackman => 74.0,
        }
    }

    /// Normalized transition width: `width_hz * taps / fs`.
    fn transition_factor(self) -> f64 {
        match self {
            Window::Hamming => 3.3,
            Window::Blackman => 5.5,
        }
    }

    pub fn coefficients(self, len: usize) -> Vec<f64> {
        if len == 1 {
            return vec![1.0];
        }
        let denom = (len - 1) as f64;
        (0..len)
            .map(|n| {
                let x = std::f64::consts::TAU * n as f64 / denom;
                match self {
                    Window::Hamming => 0.54 - 0.46 * x.cos(),
                    Window::Blackman => 0.42 - 0.5 * x.cos() + 0.08 * (2.0 * x).cos(),
                }
            })
            .collect()
    }

    /// Odd tap count giving a transition band of `transition_hz` at `fs`.
    pub fn taps_for_transition(self, transition_hz: f64, fs: f64) -> usize {
        let n = (self.transition_factor() * fs / transition_hz).ceil() as usize;
        n | 1
    }
}

/// A designed filter: taps plus the sample rate they were designed for.
#[derive(Debug, Clone, PartialEq)]
pub struct FirDesign {
    pub taps: Vec<f64>,
    pub sample_rate_hz: f64,
}

impl FirDesign {
    /// Windowed-sinc low-pass with unit DC gain; `cutoff_hz` is the -6 dB point.
    pub fn lowpass(cutoff_hz: f64, sample_rate_hz: f64, num_taps: usize, window: Window) -> Result<Self> {
        if !(cutoff_hz > 0.0 && cutoff_hz < sample_rate_hz / 2.0) {
            return Err(Error::Config(format!(
                "low-pass cutoff {cutoff_hz} Hz outside (0, {}) Hz",
                sample_rate_hz / 2.0
            )));
        }
        if num_taps % 2 == 0 {
            return Err(Error::Config("linear-phase designs need an odd tap count".into()));
        }
        let fc = cutoff_hz / sample_rate_hz;
        let centre = (num_taps - 1) as f64 / 2.0;
        let mut taps: Vec<f64> = window
            .coefficients(num_taps)
            .into_iter()
            .enumerate()
            .map(|(n, w)| {
                let x = n as f64 - centre;
                let sinc = if x == 0.0 {
                    2.0 * fc
                } else {
                    (std::f64::consts::TAU * fc * x).sin() / (std::f64::consts::PI * x)
                };
                w * sinc
            })
            .collect();
        let dc: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|t| *t /= dc);
        Ok(Self { taps, sample_rate_hz })
    }

    /// Band-pass centred on `centre_hz` with passband `centre ± half_width`,
    /// built by modulating a low-pass prototype. Unit gain at the centre.
    pub fn bandpass(
        centre_hz: f64,
        half_width_hz: f64,
        sample_rate_hz: f64,
        num_taps: usize,
        window: Window,
    ) -> Result<Self> {
        if centre_hz - half_width_hz <= 0.0 || centre_hz + half_width_hz >= sample_rate_hz / 2.0 {
            return Err(Error::Config(format!(
                "band [{}, {}] Hz does not fit below Nyquist",
                centre_hz - half_width_hz,
                centre_hz + half_width_hz
            )));
        }
        let proto = Self::lowpass(half_width_hz, sample_rate_hz, num_taps, window)?;
        let centre = (num_taps - 1) as f64 / 2.0;
        let w0 = std::f64::consts::TAU * centre_hz / sample_rate_hz;
        let taps = proto
            .taps
            .iter()
            .enumerate()
            .map(|(n, h)| 2.0 * h * (w0 * (n as f64 - centre)).cos())
            .collect();
        Ok(Self { taps, sample_rate_hz })
    }

    /// Group delay in samples.
    pub fn delay(&self) -> usize {
        (self.taps.len() - 1) / 2
    }

    /// Magnitude response at `freq_hz`.
    pub fn gain_at(&self, freq_hz: f64) -> f64 {
        let w = std::f64::consts::TAU * freq_hz / self.sample_rate_hz;
        let (re, im) = self
            .taps
            .iter()
            .enumerate()
            .fold((0.0, 0.0), |(re, im), (n, h)| {
                let p = w * n as f64;
                (re + h * p.cos(), im - h * p.sin())
            });
        (re * re + im * im).sqrt()
    }
}
