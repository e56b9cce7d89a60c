//! FFT-based convolution and spectral helpers.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// A FIR filter applied by zero-padded FFT convolution, with the group delay
/// removed so output sample `n` lines up with input sample `n`.
pub struct FftFilter {
    spectrum: Vec<Complex64>,
    fft_len: usize,
    delay: usize,
}

impl FftFilter {
    /// Prepares `taps` for inputs of up to `max_input_len` samples.
    pub fn new(taps: &[f64], max_input_len: usize) -> Self {
        let fft_len = (max_input_len + taps.len()).next_power_of_two();
        let mut spectrum: Vec<Complex64> = taps.iter().map(|&t| Complex64::new(t, 0.0)).collect();
        spectrum.resize(fft_len, Complex64::new(0.0, 0.0));
        FftPlanner::new().plan_fft_forward(fft_len).process(&mut spectrum);
        Self {
            spectrum,
            fft_len,
            delay: (taps.len() - 1) / 2,
        }
    }

    pub fn fft_len(&self) -> usize {
        self.fft_len
    }

    /// Filters a complex sequence; the output has the input's length.
    pub fn apply_complex(&self, input: &[Complex64]) -> Vec<Complex64> {
        let spectrum = forward(input, self.fft_len);
        self.apply_spectrum(&spectrum, input.len())
    }

    /// Filters a signal whose zero-padded forward transform (of this
    /// filter's length) is already known. Lets one input spectrum feed a
    /// bank of filters.
    pub fn apply_spectrum(&self, input_spectrum: &[Complex64], input_len: usize) -> Vec<Complex64> {
        assert_eq!(input_spectrum.len(), self.fft_len, "spectrum length mismatch");
        let mut buf: Vec<Complex64> = input_spectrum
            .iter()
            .zip(&self.spectrum)
            .map(|(x, h)| x * h)
            .collect();
        FftPlanner::new().plan_fft_inverse(self.fft_len).process(&mut buf);
        let scale = 1.0 / self.fft_len as f64;
        buf[self.delay..self.delay + input_len].iter().map(|v| v * scale).collect()
    }
}

/// Zero-padded forward transform.
pub fn forward(input: &[Complex64], fft_len: usize) -> Vec<Complex64> {
    let mut buf = Vec::with_capacity(fft_len);
    buf.extend_from_slice(input);
    buf.resize(fft_len, Complex64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(fft_len).process(&mut buf);
    buf
}

pub fn forward_real(input: &[f64], fft_len: usize) -> Vec<Complex64> {
    let complex: Vec<Complex64> = input.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    forward(&complex, fft_len)
}

/// "Same"-mode convolution: `out[n] = sum_k taps[k] x[n + delay - k]`.
pub fn convolve_same(signal: &[f64], taps: &[f64]) -> Vec<f64> {
    let complex: Vec<Complex64> = signal.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    convolve_same_complex(&complex, taps).into_iter().map(|c| c.re).collect()
}

pub fn convolve_same_complex(signal: &[Complex64], taps: &[f64]) -> Vec<Complex64> {
    if signal.is_empty() {
        return Vec::new();
    }
    FftFilter::new(taps, signal.len()).apply_complex(signal)
}

/// Mean-square power of `x` restricted to `lo_hz <= |f| <= hi_hz`.
///
/// By Parseval this equals the mean square of the band-limited signal, so it
/// is comparable across different lengths.
pub fn band_power(x: &[f64], rate_hz: f64, lo_hz: f64, hi_hz: f64) -> f64 {
    let n = x.len();
    if n == 0 {
        return 0.0;
    }
    let spec = forward_real(x, n);
    let norm = 1.0 / (n as f64 * n as f64);
    spec.iter()
        .enumerate()
        .filter(|(k, _)| {
            let f = (*k.min(&(n - k))) as f64 * rate_hz / n as f64;
            f >= lo_hz && f <= hi_hz
        })
        .map(|(_, c)| c.norm_sqr() * norm)
        .sum()
}
