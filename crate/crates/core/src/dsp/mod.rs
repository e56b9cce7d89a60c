//! Signal-processing building blocks shared by the pipeline stages.

pub mod fft;
pub mod fir;

pub use fft::{band_power, convolve_same, convolve_same_complex, FftFilter};
pub use fir::{FirDesign, Window};

/// Linear resampling to `out_len` points with both endpoints kept exactly.
pub fn resample_linear(x: &[f64], out_len: usize) -> Vec<f64> {
    match (x.len(), out_len) {
        (_, 0) => Vec::new(),
        (0, n) => vec![0.0; n],
        (1, n) => vec![x[0]; n],
        (_, 1) => vec![x[0]],
        (len, n) => {
            let step = (len - 1) as f64 / (n - 1) as f64;
            (0..n)
                .map(|j| {
                    if j == n - 1 {
                        return x[len - 1];
                    }
                    let pos = j as f64 * step;
                    let i = (pos.floor() as usize).min(len - 2);
                    let frac = pos - i as f64;
                    x[i] + (x[i + 1] - x[i]) * frac
                })
                .collect()
        }
    }
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        x.iter().sum::<f64>() / x.len() as f64
    }
}

pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }
}

pub fn std_dev(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64).sqrt()
}

pub fn db(power_ratio: f64) -> f64 {
    10.0 * power_ratio.log10()
}
