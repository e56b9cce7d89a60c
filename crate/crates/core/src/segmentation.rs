//! Character segmentation.
//!
//! Two passes: a short-time-energy activity detector finds candidate
//! regions, then the envelope spread `max_c(upper_c - lower_c)` is
//! thresholded at `t_d` inside those regions. Each fragment is cut across
//! all channels at once and resampled to a fixed length.

use serde::{Deserialize, Serialize};

use crate::dsp::resample_linear;
use crate::error::{Error, Result};
use crate::features::{fragment_snr, noise_reference};
use crate::interference::MotionSignal;

/// Samples per channel fed to the motion verifier.
pub const FRAGMENT_LEN: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvelopeInterp {
    /// Straight lines between extrema.
    Linear,
    /// Shape-preserving piecewise cubic; no overshoot between extrema.
    Pchip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationConfig {
    /// Envelope-spread threshold. `None` calibrates it from the leading
    /// motionless stretch of each signal.
    pub t_d: Option<f64>,
    /// Multiple of the leading-stretch mean spread used when `t_d` is `None`.
    pub t_d_factor: f64,
    /// Length of the stretch assumed motionless for calibration.
    pub calibration_s: f64,
    /// Minimum character duration.
    pub t_w_s: f64,
    /// Activity threshold above the noise floor, in dB.
    pub vad_energy_ratio_db: f64,
    pub vad_frame_s: f64,
    pub vad_hop_s: f64,
    /// Activity gaps shorter than this are bridged.
    pub vad_hangover_s: f64,
    /// Activity regions are widened by this much before the fine pass.
    pub vad_margin_s: f64,
    /// Fragments closer than this are treated as one character.
    pub merge_gap_s: f64,
    pub envelope_interp: EnvelopeInterp,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            t_d: None,
            t_d_factor: 3.0,
            calibration_s: 0.2,
            t_w_s: 0.15,
            vad_energy_ratio_db: 10.0,
            vad_frame_s: 0.02,
            vad_hop_s: 0.01,
            vad_hangover_s: 0.05,
            vad_margin_s: 0.05,
            merge_gap_s: 0.05,
            envelope_interp: EnvelopeInterp::Linear,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(t_d) = self.t_d {
            if !(t_d > 0.0) {
                return Err(Error::Config(format!("t_d {t_d} must be positive")));
            }
        }
        if !(self.t_w_s > 0.0) {
            return Err(Error::Config(format!("t_w {} s must be positive", self.t_w_s)));
        }
        if !(self.t_d_factor > 0.0 && self.calibration_s > 0.0) {
            return Err(Error::Config("threshold calibration factor and span must be positive".into()));
        }
        if !(self.vad_frame_s > 0.0 && self.vad_hop_s > 0.0) {
            return Err(Error::Config("activity frame and hop must be positive".into()));
        }
        if self.vad_hangover_s < 0.0 || self.vad_margin_s < 0.0 || self.merge_gap_s < 0.0 {
            return Err(Error::Config("activity hangover, margin and merge gap must be non-negative".into()));
        }
        Ok(())
    }
}

/// A time interval on the recording clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start_s: f64,
    pub end_s: f64,
}

impl Interval {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start_s && t <= self.end_s
    }
}

/// One spoken character, cut from every channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionFragment {
    pub start_s: f64,
    pub end_s: f64,
    /// `I_g` per carrier, then `Q_g` per carrier, each `FRAGMENT_LEN` long.
    pub channels: Vec<Vec<f64>>,
    pub snr_db: f64,
    /// The same channels at the original baseband rate.
    pub raw: Vec<Vec<f64>>,
    pub rate_hz: f64,
}

impl MotionFragment {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// Result of [`segment_characters`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    pub fragments: Vec<MotionFragment>,
    pub expected_count: Option<usize>,
    /// True when `expected_count` was given and differs from the number found.
    pub count_mismatch: bool,
    /// Threshold actually used.
    pub t_d: f64,
    pub active: Vec<Interval>,
}

/// Short-time-energy activity detection over all channels jointly.
pub fn coarse_vad(signal: &MotionSignal, config: &SegmentationConfig) -> Result<Vec<Interval>> {
    config.validate()?;
    if signal.is_empty() {
        return Err(Error::Data("activity detection needs a non-empty signal".into()));
    }
    let rate = signal.rate_hz;
    let n = signal.len();
    let frame = ((config.vad_frame_s * rate).round() as usize).clamp(1, n);
    let hop = ((config.vad_hop_s * rate).round() as usize).max(1);
    let starts: Vec<usize> = (0..=(n - frame)).step_by(hop).collect();
    let energy: Vec<f64> = starts
        .iter()
        .map(|&s| {
            signal
                .channels()
                .map(|c| c[s..s + frame].iter().map(|v| v * v).sum::<f64>())
                .sum::<f64>()
                / frame as f64
        })
        .collect();

    let mut sorted = energy.clone();
    sorted.sort_by(f64::total_cmp);
    let decile = &sorted[..sorted.len().div_ceil(10)];
    let floor = decile[decile.len() / 2];
    let gate = floor * 10f64.powf(config.vad_energy_ratio_db / 10.0);

    let mut runs: Vec<(usize, usize)> = Vec::new();
    for (k, &e) in energy.iter().enumerate() {
        if e > gate {
            let (s, t) = (starts[k], starts[k] + frame);
            match runs.last_mut() {
                Some(last) if s <= last.1 => last.1 = t,
                _ => runs.push((s, t)),
            }
        }
    }
    let hangover = (config.vad_hangover_s * rate).round() as usize;
    let mut merged: Vec<(usize, usize)> = Vec::new();
    for run in runs {
        match merged.last_mut() {
            Some(last) if run.0 < last.1 + hangover => last.1 = run.1,
            _ => merged.push(run),
        }
    }
    Ok(merged
        .into_iter()
        .map(|(s, t)| Interval {
            start_s: signal.time_s(s),
            end_s: signal.time_s(t - 1),
        })
        .collect())
}

fn local_extrema(x: &[f64], upper: bool) -> Vec<usize> {
    let n = x.len();
    let better = |a: f64, b: f64| if upper { a > b } else { a < b };
    let mut knots = vec![0];
    let mut i = 1;
    while i + 1 < n {
        if better(x[i], x[i - 1]) {
            // Walk across a plateau and keep its middle.
            let mut j = i;
            while j + 1 < n && x[j + 1] == x[i] {
                j += 1;
            }
            if j + 1 < n && better(x[i], x[j + 1]) {
                knots.push((i + j) / 2);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    if n > 1 {
        knots.push(n - 1);
    }
    knots
}

fn interpolate(x: &[f64], knots: &[usize], method: EnvelopeInterp) -> Vec<f64> {
    let n = x.len();
    let mut out = vec![0.0; n];
    if knots.len() == 1 {
        out.fill(x[knots[0]]);
        return out;
    }
    let ys: Vec<f64> = knots.iter().map(|&k| x[k]).collect();
    let slopes = match method {
        EnvelopeInterp::Linear => None,
        EnvelopeInterp::Pchip => Some(pchip_slopes(knots, &ys)),
    };
    for seg in 0..knots.len() - 1 {
        let (a, b) = (knots[seg], knots[seg + 1]);
        let h = (b - a) as f64;
        for (i, o) in out.iter_mut().enumerate().take(b + 1).skip(a) {
            let t = (i - a) as f64 / h;
            *o = match &slopes {
                None => ys[seg] + (ys[seg + 1] - ys[seg]) * t,
                Some(m) => {
                    let (t2, t3) = (t * t, t * t * t);
                    (2.0 * t3 - 3.0 * t2 + 1.0) * ys[seg]
                        + (t3 - 2.0 * t2 + t) * h * m[seg]
                        + (-2.0 * t3 + 3.0 * t2) * ys[seg + 1]
                        + (t3 - t2) * h * m[seg + 1]
                }
            };
        }
    }
    out
}

/// Fritsch-Carlson derivative estimates.
fn pchip_slopes(knots: &[usize], ys: &[f64]) -> Vec<f64> {
    let k = knots.len();
    let h: Vec<f64> = knots.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
    let d: Vec<f64> = (0..k - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
    let mut m = vec![0.0; k];
    m[0] = d[0];
    m[k - 1] = d[k - 2];
    for i in 1..k - 1 {
        if d[i - 1] * d[i] > 0.0 {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            m[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
        }
    }
    m
}

/// Upper and lower envelopes through the local maxima and minima. The
/// result is clamped so that `upper >= x >= lower` holds exactly.
pub fn envelope(channel: &[f64], method: EnvelopeInterp) -> Result<(Vec<f64>, Vec<f64>)> {
    if channel.len() < 3 {
        return Err(Error::Data("envelope needs at least three samples".into()));
    }
    let upper = interpolate(channel, &local_extrema(channel, true), method);
    let lower = interpolate(channel, &local_extrema(channel, false), method);
    Ok((
        upper.iter().zip(channel).map(|(u, x)| u.max(*x)).collect(),
        lower.iter().zip(channel).map(|(l, x)| l.min(*x)).collect(),
    ))
}

/// `max_c (upper_c - lower_c)` at every sample.
pub fn envelope_spread(signal: &MotionSignal, method: EnvelopeInterp) -> Result<Vec<f64>> {
    let mut spread = vec![0.0f64; signal.len()];
    for channel in signal.channels() {
        let (upper, lower) = envelope(channel, method)?;
        for (s, (u, l)) in spread.iter_mut().zip(upper.iter().zip(&lower)) {
            *s = s.max(u - l);
        }
    }
    Ok(spread)
}

/// Threshold used when none is configured: a multiple of the mean spread
/// over the leading stretch.
pub fn calibrate_t_d(spread: &[f64], rate_hz: f64, config: &SegmentationConfig) -> f64 {
    let n = ((config.calibration_s * rate_hz).round() as usize).clamp(1, spread.len().max(1));
    let lead = &spread[..n.min(spread.len())];
    config.t_d_factor * crate::dsp::mean(lead)
}

/// Cuts `signal` into per-character fragments. `expected_count` only sets
/// the mismatch flag; fragments are returned either way.
pub fn segment_characters(
    signal: &MotionSignal,
    config: &SegmentationConfig,
    expected_count: Option<usize>,
) -> Result<Segmentation> {
    config.validate()?;
    if let Some(n) = expected_count {
        if !(2..=6).contains(&n) {
            return Err(Error::Config(format!("expected character count {n} outside 2..=6")));
        }
    }
    let active = coarse_vad(signal, config)?;
    let spread = envelope_spread(signal, config.envelope_interp)?;
    let rate = signal.rate_hz;
    let t_d = config.t_d.unwrap_or_else(|| calibrate_t_d(&spread, rate, config));

    let empty = |t_d| Segmentation {
        fragments: Vec::new(),
        expected_count,
        count_mismatch: expected_count.is_some_and(|n| n != 0),
        t_d,
        active: active.clone(),
    };
    if !(t_d > 0.0) {
        // A zero spread in the calibration stretch means there is nothing to
        // measure against; only an exactly silent signal gets here.
        if spread.iter().all(|&s| s == 0.0) {
            return Ok(empty(t_d));
        }
    }

    let n = signal.len();
    let index_of = |t: f64| ((t - signal.start_s) * rate).round().clamp(0.0, (n - 1) as f64) as usize;
    let margin = config.vad_margin_s;
    let mut cuts: Vec<(usize, usize)> = Vec::new();
    for region in &active {
        let lo = index_of(region.start_s - margin);
        let hi = index_of(region.end_s + margin);
        let mut open: Option<usize> = None;
        for i in lo..=hi {
            match open {
                None if spread[i] > t_d => open = Some(i),
                Some(s) if spread[i] <= t_d => {
                    cuts.push((s, i));
                    open = None;
                }
                _ => {}
            }
        }
        if let Some(s) = open {
            cuts.push((s, hi + 1));
        }
    }

    let merge_gap = (config.merge_gap_s * rate).round() as usize;
    let mut merged: Vec<(usize, usize)> = Vec::new();
    for cut in cuts {
        match merged.last_mut() {
            Some(last) if cut.0 <= last.1 + merge_gap => last.1 = last.1.max(cut.1),
            _ => merged.push(cut),
        }
    }
    let min_len = config.t_w_s * rate;
    merged.retain(|&(s, e)| (e - s) as f64 >= min_len);

    let noise = noise_reference(signal, &active, config);
    let fragments = merged
        .into_iter()
        .map(|(s, e)| {
            let raw: Vec<Vec<f64>> = signal.channels().map(|c| c[s..e].to_vec()).collect();
            let mut fragment = MotionFragment {
                start_s: signal.time_s(s),
                end_s: signal.time_s(e),
                channels: raw.iter().map(|c| resample_linear(c, FRAGMENT_LEN)).collect(),
                snr_db: 0.0,
                raw,
                rate_hz: rate,
            };
            fragment.snr_db = fragment_snr(&fragment, &noise);
            fragment
        })
        .collect::<Vec<_>>();
    Ok(Segmentation {
        count_mismatch: expected_count.is_some_and(|c| c != fragments.len()),
        fragments,
        expected_count,
        t_d,
        active,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::carrier::CarrierSet;
    use proptest::prelude::*;

    const RATE: f64 = 960.0;

    fn signal(ig: Vec<Vec<f64>>, qg: Vec<Vec<f64>>) -> MotionSignal {
        let n = ig.len();
        let freqs: Vec<u32> = (0..n as u32).map(|k| 18_000 + 500 * k).collect();
        MotionSignal {
            ig_channels: ig,
            qg_channels: qg,
            source_carriers: CarrierSet::new(freqs, 0.3).unwrap(),
            rate_hz: RATE,
            start_s: 0.0,
        }
    }

    /// Gaussian-windowed 12 Hz bursts on a low deterministic noise bed.
    fn bursts(secs: f64, spans: &[(f64, f64, f64)], noise: f64) -> Vec<f64> {
        let n = (secs * RATE) as usize;
        let mut state = 0x2545_f491_4f6c_dd1du64;
        (0..n)
            .map(|k| {
                let t = k as f64 / RATE;
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                let u = (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
                let mut v = noise * u;
                for &(a, b, amp) in spans {
                    if t >= a && t <= b {
                        let w = (std::f64::consts::PI * (t - a) / (b - a)).sin();
                        v += amp * w * (std::f64::consts::TAU * 12.0 * t).sin();
                    }
                }
                v
            })
            .collect()
    }

    fn one_channel(x: Vec<f64>) -> MotionSignal {
        signal(vec![x.clone()], vec![x])
    }

    #[test]
    fn vad_silence_and_single_burst() {
        let silent = one_channel(vec![0.0; 2000]);
        assert!(coarse_vad(&silent, &SegmentationConfig::default()).unwrap().is_empty());
        let x = bursts(1.5, &[(0.4, 0.8, 1.0)], 1e-3);
        let found = coarse_vad(&one_channel(x), &SegmentationConfig::default()).unwrap();
        assert_eq!(found.len(), 1, "{found:?}");
        assert!((found[0].start_s - 0.4).abs() <= 0.05 && (found[0].end_s - 0.8).abs() <= 0.05, "{found:?}");
    }

    #[test]
    fn vad_bridges_short_gaps() {
        let x = bursts(1.5, &[(0.3, 0.6, 1.0), (0.63, 0.9, 1.0)], 1e-3);
        let found = coarse_vad(&one_channel(x), &SegmentationConfig::default()).unwrap();
        assert_eq!(found.len(), 1, "{found:?}");
    }

    #[test]
    fn envelope_of_constant_and_tone() {
        let (u, l) = envelope(&[0.5; 50], EnvelopeInterp::Linear).unwrap();
        assert!(u.iter().chain(&l).all(|&v| v == 0.5));
        let x: Vec<f64> = (0..960).map(|k| (std::f64::consts::TAU * 10.0 * k as f64 / RATE).sin()).collect();
        for method in [EnvelopeInterp::Linear, EnvelopeInterp::Pchip] {
            let (u, l) = envelope(&x, method).unwrap();
            for k in 100..860 {
                assert!((u[k] - 1.0).abs() < 1e-3 && (l[k] + 1.0).abs() < 1e-3, "{method:?} at {k}");
            }
        }
        assert!(envelope(&[1.0, 2.0], EnvelopeInterp::Linear).is_err());
    }

    #[test]
    fn envelope_tracks_amplitude_modulation() {
        let a = |t: f64| 1.0 + 0.5 * (std::f64::consts::TAU * 0.5 * t).sin();
        let x: Vec<f64> = (0..1920)
            .map(|k| {
                let t = k as f64 / RATE;
                a(t) * (std::f64::consts::TAU * 10.0 * t).cos()
            })
            .collect();
        let (u, l) = envelope(&x, EnvelopeInterp::Linear).unwrap();
        for k in 100..1820 {
            let half = (u[k] - l[k]) / 2.0;
            let truth = a(k as f64 / RATE);
            assert!((half - truth).abs() / truth < 0.1, "{k}: {half} vs {truth}");
        }
    }

    #[test]
    fn finds_separated_bursts_with_accurate_boundaries() {
        let spans = [(0.5, 0.8, 1.0), (1.0, 1.35, 0.7), (1.6, 1.9, 1.2)];
        let x = bursts(2.5, &spans, 1e-3);
        let seg = segment_characters(&one_channel(x), &SegmentationConfig::default(), Some(3)).unwrap();
        assert_eq!(seg.fragments.len(), 3);
        assert!(!seg.count_mismatch);
        for (f, s) in seg.fragments.iter().zip(&spans) {
            assert!((f.start_s - s.0).abs() < 0.05 && (f.end_s - s.1).abs() < 0.05, "{f:?} vs {s:?}");
            assert_eq!(f.channels.len(), 2);
            assert!(f.channels.iter().all(|c| c.len() == FRAGMENT_LEN));
            assert_eq!(f.channels[0][0], f.raw[0][0]);
            assert_eq!(f.channels[0][FRAGMENT_LEN - 1], *f.raw[0].last().unwrap());
            assert!(f.snr_db > 20.0);
        }
    }

    #[test]
    fn noise_only_gives_no_fragments() {
        let x = bursts(2.0, &[], 1e-3);
        let seg = segment_characters(&one_channel(x), &SegmentationConfig::default(), Some(4)).unwrap();
        assert!(seg.fragments.is_empty());
        assert!(seg.count_mismatch);
        let seg = segment_characters(&one_channel(vec![0.0; 1000]), &SegmentationConfig::default(), None).unwrap();
        assert!(seg.fragments.is_empty() && !seg.count_mismatch);
    }

    #[test]
    fn short_bursts_are_dropped() {
        let x = bursts(2.0, &[(0.8, 0.9, 1.0)], 1e-3);
        let seg = segment_characters(&one_channel(x), &SegmentationConfig::default(), None).unwrap();
        assert!(seg.fragments.is_empty(), "{:?}", seg.fragments.iter().map(|f| (f.start_s, f.end_s)).collect::<Vec<_>>());
    }

    #[test]
    fn invalid_config_and_counts() {
        let x = one_channel(bursts(1.0, &[], 1e-3));
        let bad = SegmentationConfig {
            t_w_s: 0.0,
            ..SegmentationConfig::default()
        };
        assert!(segment_characters(&x, &bad, None).is_err());
        assert!(segment_characters(&x, &SegmentationConfig::default(), Some(7)).is_err());
    }

    fn boundaries(seg: &Segmentation) -> Vec<(f64, f64)> {
        seg.fragments.iter().map(|f| (f.start_s, f.end_s)).collect()
    }

    fn random_spans() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
        proptest::collection::vec((0.2f64..0.4, 0.3f64..2.0), 1..4).prop_map(|parts| {
            let mut t = 0.5;
            parts
                .into_iter()
                .map(|(len, amp)| {
                    let span = (t, t + len, amp);
                    t += len + 0.3;
                    span
                })
                .collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn raising_t_d_never_adds_fragments(spans in random_spans(), t1 in 0.05f64..1.0, dt in 0.0f64..1.0) {
            let x = one_channel(bursts(2.5, &spans, 1e-3));
            let cfg = |t_d| SegmentationConfig { t_d: Some(t_d), ..SegmentationConfig::default() };
            let low = segment_characters(&x, &cfg(t1), None).unwrap().fragments.len();
            let high = segment_characters(&x, &cfg(t1 + dt), None).unwrap().fragments.len();
            prop_assert!(high <= low);
        }

        #[test]
        fn scaling_signal_and_threshold_together_is_a_no_op(spans in random_spans(), c in 0.01f64..100.0) {
            let x = bursts(2.5, &spans, 1e-3);
            let scaled: Vec<f64> = x.iter().map(|v| v * c).collect();
            let cfg = |t_d| SegmentationConfig { t_d: Some(t_d), ..SegmentationConfig::default() };
            let a = segment_characters(&one_channel(x), &cfg(0.2), None).unwrap();
            let b = segment_characters(&one_channel(scaled), &cfg(0.2 * c), None).unwrap();
            prop_assert_eq!(boundaries(&a), boundaries(&b));
        }

        #[test]
        fn delaying_shifts_boundaries(spans in random_spans(), shift in 1usize..200) {
            let x = bursts(2.5, &spans, 1e-3);
            let mut delayed = vec![0.0; shift];
            delayed.extend_from_slice(&x[..x.len() - shift]);
            // Same noise bed under the delay so only timing differs.
            let bed = bursts(2.5, &[], 1e-3);
            delayed[..shift].copy_from_slice(&bed[x.len() - shift..]);
            let cfg = SegmentationConfig { t_d: Some(0.2), ..SegmentationConfig::default() };
            let a = segment_characters(&one_channel(x), &cfg, None).unwrap();
            let b = segment_characters(&one_channel(delayed), &cfg, None).unwrap();
            let dt = shift as f64 / RATE;
            prop_assert_eq!(a.fragments.len(), b.fragments.len());
            for (p, q) in boundaries(&a).iter().zip(boundaries(&b)) {
                prop_assert!((q.0 - p.0 - dt).abs() <= 1.0 / RATE + 1e-9);
                prop_assert!((q.1 - p.1 - dt).abs() <= 1.0 / RATE + 1e-9);
            }
        }
    }
}
