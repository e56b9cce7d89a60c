//! Static interference elimination.
//!
//! Paths of constant length add a constant to I and Q. Differentiating
//! removes it, leaving `-A φ' sin φ` and `-A φ' cos φ` for the lip path
//! (the reflection amplitude is taken as constant). A sliding local-linear
//! least-squares fit then removes whatever slowly varying residue remains.

use serde::{Deserialize, Serialize};

use crate::carrier::CarrierSet;
use crate::demodulation::BasebandFrame;
use crate::error::{Error, Result};

/// Motion-only signal: derivatives of I and Q per carrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionSignal {
    pub ig_channels: Vec<Vec<f64>>,
    pub qg_channels: Vec<Vec<f64>>,
    pub source_carriers: CarrierSet,
    pub rate_hz: f64,
    /// Recording time of the first sample.
    pub start_s: f64,
}

impl MotionSignal {
    pub fn len(&self) -> usize {
        self.ig_channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_carriers(&self) -> usize {
        self.ig_channels.len()
    }

    pub fn time_s(&self, index: usize) -> f64 {
        self.start_s + index as f64 / self.rate_hz
    }

    /// Channels in `I_1..I_N, Q_1..Q_N` order.
    pub fn channels(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.ig_channels.iter().chain(&self.qg_channels)
    }

    fn map_channels(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Self {
        Self {
            ig_channels: self.ig_channels.iter().map(|c| f(c)).collect(),
            qg_channels: self.qg_channels.iter().map(|c| f(c)).collect(),
            source_carriers: self.source_carriers.clone(),
            rate_hz: self.rate_hz,
            start_s: self.start_s,
        }
    }
}

/// Backward first difference scaled by the rate. Sample `k` of the output
/// sits at frame sample `k + 1`.
pub fn gradient(frame: &BasebandFrame) -> Result<MotionSignal> {
    if frame.len() < 2 {
        return Err(Error::Data("gradient needs at least two baseband samples".into()));
    }
    let rate = frame.baseband_rate_hz;
    let diff = |x: &Vec<f64>| x.windows(2).map(|w| (w[1] - w[0]) * rate).collect::<Vec<f64>>();
    Ok(MotionSignal {
        ig_channels: frame.i_channels.iter().map(diff).collect(),
        qg_channels: frame.q_channels.iter().map(diff).collect(),
        source_carriers: frame.carriers.clone(),
        rate_hz: rate,
        start_s: frame.start_s + 1.0 / rate,
    })
}

/// Settings for the slow-trend removal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetrendConfig {
    /// Length of the local fit.
    pub window_s: f64,
    /// Bisquare reweighting passes after the first fit. Zero gives plain
    /// least squares; with one or more, samples far off the trend (the
    /// motion itself) stop pulling the local line toward them.
    pub robust_iterations: usize,
}

impl Default for DetrendConfig {
    fn default() -> Self {
        Self {
            window_s: 0.5,
            robust_iterations: 4,
        }
    }
}

/// Subtracts, at every sample, the value of a least-squares line fitted
/// over a `window_s` window around it. Near the ends the window is slid
/// inward rather than truncated. Output channels are zero-mean.
pub fn mmse_detrend(signal: &MotionSignal, window_s: f64) -> Result<MotionSignal> {
    detrend(
        signal,
        &DetrendConfig {
            window_s,
            ..DetrendConfig::default()
        },
    )
}

pub fn detrend(signal: &MotionSignal, config: &DetrendConfig) -> Result<MotionSignal> {
    let window_s = config.window_s;
    if !(window_s > 0.0) {
        return Err(Error::Config(format!("detrend window {window_s} s must be positive")));
    }
    let width = ((window_s * signal.rate_hz).round() as usize).max(2);
    if width > signal.len() {
        return Err(Error::Config(format!(
            "detrend window of {width} samples exceeds the {} sample signal",
            signal.len()
        )));
    }
    Ok(signal.map_channels(|x| detrend_channel(x, width, config.robust_iterations)))
}

/// Local weighted line through `x` evaluated at every sample.
fn local_trend(x: &[f64], w: &[f64], width: usize) -> Vec<f64> {
    let n = x.len();
    let half = width / 2;
    // Prefix sums of w, w·j, w·j², w·y and w·j·y.
    let mut prefix = vec![[0.0f64; 5]; n + 1];
    for j in 0..n {
        let (t, wj, y) = (j as f64, w[j], x[j]);
        let p = prefix[j];
        prefix[j + 1] = [p[0] + wj, p[1] + wj * t, p[2] + wj * t * t, p[3] + wj * y, p[4] + wj * t * y];
    }
    (0..n)
        .map(|i| {
            let start = i.saturating_sub(half).min(n - width);
            let (hi, lo) = (prefix[start + width], prefix[start]);
            let d: Vec<f64> = (0..5).map(|k| hi[k] - lo[k]).collect();
            // Move to offsets from the window start, which keeps the
            // normal equations well conditioned.
            let o = start as f64;
            let s0 = d[0];
            let s1 = d[1] - o * d[0];
            let s2 = d[2] - 2.0 * o * d[1] + o * o * d[0];
            let sy = d[3];
            let sty = d[4] - o * d[3];
            if s0 <= 1e-9 {
                return f64::NAN;
            }
            let det = s0 * s2 - s1 * s1;
            let t = (i - start) as f64;
            if det <= 1e-9 * s0 * s2.max(1.0) {
                return sy / s0;
            }
            let slope = (s0 * sty - s1 * sy) / det;
            let intercept = (sy - slope * s1) / s0;
            intercept + slope * t
        })
        .collect()
}

fn detrend_channel(x: &[f64], width: usize, robust_iterations: usize) -> Vec<f64> {
    let ones = vec![1.0; x.len()];
    let plain = local_trend(x, &ones, width);
    let mut trend = plain.clone();
    for _ in 0..robust_iterations {
        let resid: Vec<f64> = x.iter().zip(&trend).map(|(a, b)| (a - b).abs()).collect();
        let mut sorted = resid.clone();
        let mid = sorted.len() / 2;
        let scale = 6.0 * *sorted.select_nth_unstable_by(mid, f64::total_cmp).1;
        if scale == 0.0 {
            break;
        }
        let weights: Vec<f64> = resid
            .iter()
            .map(|r| {
                let u = r / scale;
                if u < 1.0 {
                    (1.0 - u * u).powi(2)
                } else {
                    0.0
                }
            })
            .collect();
        trend = local_trend(x, &weights, width);
    }
    // Windows with no usable weight keep the unweighted fit.
    let resid: Vec<f64> = x
        .iter()
        .zip(trend.iter().zip(&plain))
        .map(|(v, (t, p))| v - if t.is_finite() { *t } else { *p })
        .collect();
    // The robust fit leaves a small offset where bursts were down-weighted.
    let mean = resid.iter().sum::<f64>() / resid.len() as f64;
    resid.into_iter().map(|r| r - mean).collect()
}
