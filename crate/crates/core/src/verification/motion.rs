//! Training and applying the motion verifier.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use super::network::{MotionNet, ARCHITECTURE, INPUT_LEN, INPUT_ROWS};
use crate::error::{Error, Result};
use crate::segmentation::MotionFragment;

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Optimizer steps.
    pub max_iter: usize,
    /// Samples per step, split evenly between the classes.
    pub batch_size: usize,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            max_iter: 500,
            batch_size: 8,
            optimizer: Optimizer::Adam,
            seed: 0,
        }
    }
}

/// A frozen motion verifier plus how it was trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionVerifierModel {
    pub version: u32,
    pub architecture: String,
    pub training: TrainConfig,
    pub net: MotionNet,
}

impl MotionVerifierModel {
    pub fn untrained(seed: u64) -> Self {
        Self {
            version: MODEL_SCHEMA_VERSION,
            architecture: ARCHITECTURE.to_string(),
            training: TrainConfig { seed, ..TrainConfig::default() },
            net: MotionNet::init(seed),
        }
    }

    /// Probability that the fragment shows real lip motion.
    pub fn score(&self, fragment: &MotionFragment) -> Result<f64> {
        Ok(self.net.predict(&fragment_input(fragment)?)?[1])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        if model.version != MODEL_SCHEMA_VERSION || model.architecture != ARCHITECTURE {
            return Err(Error::Data(format!(
                "model is '{}' v{}; expected '{ARCHITECTURE}' v{MODEL_SCHEMA_VERSION}",
                model.architecture, model.version
            )));
        }
        model.net.check()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// The network input for a fragment: its resampled channels as rows,
/// scaled so the largest magnitude is one.
pub fn fragment_input(fragment: &MotionFragment) -> Result<Vec<f64>> {
    if fragment.channels.len() != INPUT_ROWS || fragment.channels.iter().any(|c| c.len() != INPUT_LEN) {
        return Err(Error::Data(format!(
            "fragment is {}x{}; the motion verifier takes {INPUT_ROWS}x{INPUT_LEN}",
            fragment.channels.len(),
            fragment.channels.first().map_or(0, Vec::len)
        )));
    }
    let peak = fragment.channels.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if peak > 0.0 { 1.0 / peak } else { 1.0 };
    Ok(fragment.channels.iter().flatten().map(|v| v * scale).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    /// Mean batch loss per step.
    pub losses: Vec<f64>,
    /// Mean loss over each pass-worth of steps.
    pub epoch_losses: Vec<f64>,
    pub train_accuracy: f64,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * grad[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

fn batch_gradient(net: &MotionNet, batch: &[(&[f64], usize)]) -> Result<(f64, Vec<f64>)> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let parts: Vec<Result<(f64, Vec<f64>)>> = batch
            .par_iter()
            .map(|(x, y)| {
                let mut g = vec![0.0; net.params.len()];
                let l = net.loss_and_grad(x, *y, &mut g)?;
                Ok((l, g))
            })
            .collect();
        // Reduce in input order so the result does not depend on scheduling.
        let mut grad = vec![0.0; net.params.len()];
        let mut loss = 0.0;
        for part in parts {
            let (l, g) = part?;
            loss += l;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
        Ok((loss, grad))
    }
    #[cfg(not(feature = "parallel"))]
    {
        let mut grad = vec![0.0; net.params.len()];
        let mut loss = 0.0;
        for (x, y) in batch {
            loss += net.loss_and_grad(x, *y, &mut grad)?;
        }
        Ok((loss, grad))
    }
}

/// Trains on raw network inputs (`6 x 128` each); label 1 is real motion.
pub fn train_on_inputs(
    positives: &[Vec<f64>],
    negatives: &[Vec<f64>],
    config: &TrainConfig,
) -> Result<(MotionVerifierModel, TrainingReport)> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::Data("training needs at least one sample of each class".into()));
    }
    if let Some(bad) = positives.iter().chain(negatives).find(|x| x.len() != INPUT_ROWS * INPUT_LEN) {
        return Err(Error::Data(format!(
            "training sample has {} values; expected {INPUT_ROWS}x{INPUT_LEN}",
            bad.len()
        )));
    }
    if config.batch_size == 0 || !(config.learning_rate > 0.0) {
        return Err(Error::Config("batch size and learning rate must be positive".into()));
    }
    let mut net = MotionNet::init(config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut adam = Adam {
        m: vec![0.0; net.params.len()],
        v: vec![0.0; net.params.len()],
        t: 0,
    };
    let mut losses = Vec::with_capacity(config.max_iter);
    for _ in 0..config.max_iter {
        let batch: Vec<(&[f64], usize)> = (0..config.batch_size)
            .map(|k| {
                if k % 2 == 0 {
                    (positives[rng.random_range(0..positives.len())].as_slice(), 1)
                } else {
                    (negatives[rng.random_range(0..negatives.len())].as_slice(), 0)
                }
            })
            .collect();
        let (loss, mut grad) = batch_gradient(&net, &batch)?;
        let scale = 1.0 / batch.len() as f64;
        grad.iter_mut().for_each(|g| *g *= scale);
        match config.optimizer {
            Optimizer::Adam => adam.step(&mut net.params, &grad, config.learning_rate),
            Optimizer::Sgd => {
                for (p, g) in net.params.iter_mut().zip(&grad) {
                    *p -= config.learning_rate * g;
                }
            }
        }
        losses.push(loss * scale);
    }
    let steps_per_epoch = (positives.len() + negatives.len()).div_ceil(config.batch_size).max(1);
    let epoch_losses = losses
        .chunks(steps_per_epoch)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    let model = MotionVerifierModel {
        version: MODEL_SCHEMA_VERSION,
        architecture: ARCHITECTURE.to_string(),
        training: config.clone(),
        net,
    };
    let correct = positives
        .iter()
        .map(|x| (x, 1))
        .chain(negatives.iter().map(|x| (x, 0)))
        .map(|(x, y)| Ok(usize::from((model.net.predict(x)?[1] > 0.5) == (y == 1))))
        .sum::<Result<usize>>()?;
    let report = TrainingReport {
        losses,
        epoch_losses,
        train_accuracy: correct as f64 / (positives.len() + negatives.len()) as f64,
    };
    Ok((model, report))
}

pub fn train_motion_verifier(
    positives: &[MotionFragment],
    negatives: &[MotionFragment],
    config: &TrainConfig,
) -> Result<(MotionVerifierModel, TrainingReport)> {
    let pos = positives.iter().map(fragment_input).collect::<Result<Vec<_>>>()?;
    let neg = negatives.iter().map(fragment_input).collect::<Result<Vec<_>>>()?;
    train_on_inputs(&pos, &neg, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionVerdict {
    pub pass: bool,
    /// Probability of real motion per fragment.
    pub scores: Vec<f64>,
    pub valid_count: usize,
    pub expected_count: usize,
}

/// Majority rule over per-fragment decisions.
pub fn decide_motion(scores: Vec<f64>, expected_count: usize) -> MotionVerdict {
    decide_motion_at(scores, expected_count, 0.5)
}

/// [`decide_motion`] with a fragment counted valid above `threshold`.
pub fn decide_motion_at(scores: Vec<f64>, expected_count: usize, threshold: f64) -> MotionVerdict {
    let valid_count = scores.iter().filter(|&&s| s > threshold).count();
    MotionVerdict {
        pass: 2 * valid_count > expected_count,
        scores,
        valid_count,
        expected_count,
    }
}

/// Passes when strictly more than half of `expected_count` fragments are
/// judged valid.
pub fn verify_motion(
    model: &MotionVerifierModel,
    fragments: &[MotionFragment],
    expected_count: usize,
) -> Result<MotionVerdict> {
    let scores = fragments.iter().map(|f| model.score(f)).collect::<Result<Vec<_>>>()?;
    Ok(decide_motion(scores, expected_count))
}
