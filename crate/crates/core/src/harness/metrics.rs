//! ROC, AUC, EER and per-scenario rates.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::simulator::Scenario;

/// One scored attempt. Genuine attempts are the positive class; every
/// attack scenario is negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredAttempt {
    pub scenario: Scenario,
    pub score: f64,
    /// Decision at the operating threshold.
    pub accept: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub far: f64,
    pub tar: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioCounts {
    pub total: usize,
    pub accepted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub roc: Vec<RocPoint>,
    pub auc: f64,
    pub eer: f64,
    /// Fraction of attempts decided correctly at the operating threshold.
    pub accuracy: f64,
    pub tar: f64,
    pub far: f64,
    pub frr: f64,
    pub counts: BTreeMap<String, ScenarioCounts>,
}

/// ROC from a threshold sweep, accepting `score >= t`. Tied scores move
/// together, so each distinct score contributes one point. Starts at (0, 0)
/// and ends at (1, 1).
pub fn roc_curve(genuine: &[f64], attack: &[f64]) -> Result<Vec<RocPoint>> {
    if genuine.is_empty() || attack.is_empty() {
        return Err(Error::Metric(format!(
            "need both classes; got {} genuine and {} attack scores",
            genuine.len(),
            attack.len()
        )));
    }
    if genuine.iter().chain(attack).any(|s| s.is_nan()) {
        return Err(Error::Metric("NaN score".into()));
    }
    let mut all: Vec<(f64, bool)> = genuine
        .iter()
        .map(|&s| (s, true))
        .chain(attack.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (np, nn) = (genuine.len() as f64, attack.len() as f64);
    let mut roc = vec![RocPoint { far: 0.0, tar: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < all.len() {
        let s = all[i].0;
        while i < all.len() && all[i].0 == s {
            if all[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        roc.push(RocPoint {
            far: fp as f64 / nn,
            tar: tp as f64 / np,
        });
    }
    Ok(roc)
}

/// Trapezoid area under the ROC.
pub fn auc(roc: &[RocPoint]) -> f64 {
    roc.windows(2)
        .map(|w| (w[1].far - w[0].far) * (w[0].tar + w[1].tar) / 2.0)
        .sum()
}

/// Where FAR meets FRR, interpolating linearly between ROC points.
pub fn eer(roc: &[RocPoint]) -> f64 {
    let diff = |p: &RocPoint| p.far - (1.0 - p.tar);
    for w in roc.windows(2) {
        let (d0, d1) = (diff(&w[0]), diff(&w[1]));
        if d0 == 0.0 {
            return w[0].far;
        }
        if d0 < 0.0 && d1 >= 0.0 {
            let lambda = -d0 / (d1 - d0);
            return w[0].far + lambda * (w[1].far - w[0].far);
        }
    }
    roc.last().map_or(1.0, |p| p.far)
}

pub fn compute_metrics(attempts: &[ScoredAttempt]) -> Result<MetricReport> {
    let genuine: Vec<f64> = attempts.iter().filter(|a| !a.scenario.is_attack()).map(|a| a.score).collect();
    let attack: Vec<f64> = attempts.iter().filter(|a| a.scenario.is_attack()).map(|a| a.score).collect();
    let roc = roc_curve(&genuine, &attack)?;

    let mut counts: BTreeMap<String, ScenarioCounts> = BTreeMap::new();
    for a in attempts {
        let c = counts.entry(a.scenario.label().to_string()).or_default();
        c.total += 1;
        c.accepted += usize::from(a.accept);
    }
    let true_accepts = attempts.iter().filter(|a| !a.scenario.is_attack() && a.accept).count();
    let false_accepts = attempts.iter().filter(|a| a.scenario.is_attack() && a.accept).count();
    let correct = true_accepts + (attack.len() - false_accepts);
    let tar = true_accepts as f64 / genuine.len() as f64;
    Ok(MetricReport {
        auc: auc(&roc),
        eer: eer(&roc),
        roc,
        accuracy: correct as f64 / attempts.len() as f64,
        tar,
        far: false_accepts as f64 / attack.len() as f64,
        frr: 1.0 - tar,
        counts,
    })
}

pub fn write_roc_csv(roc: &[RocPoint], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["far", "tar"])?;
    for p in roc {
        w.write_record([p.far.to_string(), p.tar.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
