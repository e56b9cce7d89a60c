//! Soft-margin kernel SVM trained by sequential minimal optimization with
//! second-order working-set selection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Kernel {
    Linear,
    /// `(gamma * <x, y> + coef0) ^ degree`; `gamma = None` means `1 / dim`.
    Polynomial { degree: u32, gamma: Option<f64>, coef0: f64 },
}

impl Kernel {
    pub fn cubic() -> Self {
        Kernel::Polynomial {
            degree: 3,
            gamma: None,
            coef0: 1.0,
        }
    }

    fn resolve(self, dim: usize) -> Self {
        match self {
            Kernel::Polynomial { degree, gamma: None, coef0 } => Kernel::Polynomial {
                degree,
                gamma: Some(1.0 / dim.max(1) as f64),
                coef0,
            },
            k => k,
        }
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        match *self {
            Kernel::Linear => d,
            Kernel::Polynomial { degree, gamma, coef0 } => {
                let g = gamma.unwrap_or(1.0 / a.len().max(1) as f64);
                (g * d + coef0).powi(degree as i32)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    pub kernel: Kernel,
    /// Box constraint.
    pub c: f64,
    /// Stopping tolerance on the maximal KKT violation.
    pub tolerance: f64,
    pub max_iter: usize,
    pub scaling: Scaling,
    pub class_weight: ClassWeight,
}

/// How the box constraint is split between the two classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassWeight {
    /// Both classes use `c`.
    Uniform,
    /// Class `k` uses `c * n / (2 * n_k)`, so a small positive set is not
    /// outvoted by a large negative one.
    Balanced,
}

/// Per-feature affine map applied before the kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scaling {
    None,
    /// Subtract the mean of all training samples, divide by their spread.
    ZScore,
    /// Subtract the mean of the positive samples, divide by the spread of
    /// all samples. The polynomial kernel is then centred on the positive
    /// class rather than on the whole population.
    PositiveAnchored,
}

/// Kernel gain used by the default profile kernel on scaled features.
pub const DEFAULT_GAMMA: f64 = 0.1875;

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            kernel: Kernel::Polynomial {
                degree: 3,
                gamma: Some(DEFAULT_GAMMA),
                coef0: 1.0,
            },
            c: 1.0,
            tolerance: 1e-6,
            max_iter: 1_000_000,
            scaling: Scaling::PositiveAnchored,
            class_weight: ClassWeight::Uniform,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: Kernel,
    pub c: f64,
    /// Box bounds of the positive and negative class.
    pub class_bounds: (f64, f64),
    /// Support vectors in the scaled training space.
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i` per support vector.
    pub coefficients: Vec<f64>,
    pub bias: f64,
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    /// Every training point lies on its own side of the boundary.
    pub separable: bool,
    /// Maximal KKT violation at exit.
    pub kkt_residual: f64,
    pub iterations: usize,
    pub dual_objective: f64,
}

impl SvmModel {
    fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.feature_mean.iter().zip(&self.feature_scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.feature_mean.len()
    }

    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Data(format!("feature vector has {} values; model expects {}", x.len(), self.dim())));
        }
        let z = self.transform(x);
        Ok(self
            .support_vectors
            .iter()
            .zip(&self.coefficients)
            .map(|(sv, a)| a * self.kernel.eval(sv, &z))
            .sum::<f64>()
            + self.bias)
    }
}

/// Trains on `positives` (label +1) against `negatives` (label -1).
pub fn train_svm(positives: &[Vec<f64>], negatives: &[Vec<f64>], config: &SvmConfig) -> Result<SvmModel> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::Data("SVM training needs samples of both classes".into()));
    }
    if !(config.c > 0.0 && config.tolerance > 0.0) {
        return Err(Error::Config("SVM box constraint and tolerance must be positive".into()));
    }
    let dim = positives[0].len();
    if dim == 0 || positives.iter().chain(negatives).any(|x| x.len() != dim) {
        return Err(Error::Data("SVM samples must share one non-zero dimension".into()));
    }
    let raw: Vec<&Vec<f64>> = positives.iter().chain(negatives).collect();
    if raw.iter().all(|x| x == &raw[0]) {
        return Err(Error::DegenerateMargin("all training samples are identical".into()));
    }
    let n = raw.len();
    let y: Vec<f64> = (0..n).map(|i| if i < positives.len() { 1.0 } else { -1.0 }).collect();

    let column_mean = |rows: &[&Vec<f64>], k: usize| rows.iter().map(|x| x[k]).sum::<f64>() / rows.len() as f64;
    let spread = || -> Vec<f64> {
        (0..dim)
            .map(|k| {
                let m = column_mean(&raw, k);
                let var = raw.iter().map(|x| (x[k] - m).powi(2)).sum::<f64>() / n as f64;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect()
    };
    let (mean, scale) = match config.scaling {
        Scaling::None => (vec![0.0; dim], vec![1.0; dim]),
        Scaling::ZScore => ((0..dim).map(|k| column_mean(&raw, k)).collect(), spread()),
        Scaling::PositiveAnchored => {
            let pos: Vec<&Vec<f64>> = positives.iter().collect();
            ((0..dim).map(|k| column_mean(&pos, k)).collect(), spread())
        }
    };
    let xs: Vec<Vec<f64>> = raw
        .iter()
        .map(|x| x.iter().zip(mean.iter().zip(&scale)).map(|(v, (m, s))| (v - m) / s).collect())
        .collect();
    let kernel = config.kernel.resolve(dim);
    let k: Vec<f64> = (0..n)
        .flat_map(|i| {
            let xs = &xs;
            (0..n).map(move |j| kernel.eval(&xs[i], &xs[j]))
        })
        .collect();

    let c = config.c;
    let (c_pos, c_neg) = match config.class_weight {
        ClassWeight::Uniform => (c, c),
        ClassWeight::Balanced => (
            c * n as f64 / (2.0 * positives.len() as f64),
            c * n as f64 / (2.0 * negatives.len() as f64),
        ),
    };
    let bound: Vec<f64> = y.iter().map(|&yi| if yi > 0.0 { c_pos } else { c_neg }).collect();
    let mut alpha = vec![0.0; n];
    // Gradient of 1/2 a'Qa - e'a with Q_ij = y_i y_j K_ij.
    let mut grad = vec![-1.0; n];
    let up = |t: usize, a: f64| (y[t] > 0.0 && a < bound[t]) || (y[t] < 0.0 && a > 0.0);
    let low = |t: usize, a: f64| (y[t] > 0.0 && a > 0.0) || (y[t] < 0.0 && a < bound[t]);
    let tau = 1e-12;
    let mut iterations = 0;
    let violation = loop {
        let mut i = usize::MAX;
        let mut g_max = f64::NEG_INFINITY;
        for t in 0..n {
            if up(t, alpha[t]) && -y[t] * grad[t] > g_max {
                g_max = -y[t] * grad[t];
                i = t;
            }
        }
        let mut g_min = f64::INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !low(t, alpha[t]) {
                continue;
            }
            let v = -y[t] * grad[t];
            g_min = g_min.min(v);
            if i != usize::MAX && v < g_max {
                let b = g_max - v;
                let a = (k[i * n + i] + k[t * n + t] - 2.0 * k[i * n + t]).max(tau);
                let score = -b * b / a;
                if score < best {
                    best = score;
                    j = t;
                }
            }
        }
        let gap = g_max - g_min;
        if i == usize::MAX || j == usize::MAX || gap < config.tolerance {
            break gap.max(0.0);
        }
        if iterations >= config.max_iter {
            return Err(Error::Estimation(format!(
                "SMO stopped after {iterations} iterations with KKT violation {gap:.3e}"
            )));
        }
        iterations += 1;

        let (ai, aj) = (alpha[i], alpha[j]);
        let (ci, cj) = (bound[i], bound[j]);
        let quad = (k[i * n + i] + k[j * n + j] - 2.0 * k[i * n + j]).max(tau);
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > ci - cj {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = ci - diff;
                }
            } else if alpha[j] > cj {
                alpha[j] = cj;
                alpha[i] = cj + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > ci {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = sum - ci;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > cj {
                if alpha[j] > cj {
                    alpha[j] = cj;
                    alpha[i] = sum - cj;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - ai, alpha[j] - aj);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * k[i * n + t] * di + y[j] * k[j * n + t] * dj);
        }
    };

    // Offset from the free vectors, or the midpoint of the feasible range.
    let free: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0 && alpha[t] < bound[t]).collect();
    let rho = if free.is_empty() {
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        for t in 0..n {
            let yg = y[t] * grad[t];
            let at_upper = alpha[t] >= bound[t];
            let at_lower = alpha[t] <= 0.0;
            if (at_upper && y[t] < 0.0) || (at_lower && y[t] > 0.0) {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        }
        (ub + lb) / 2.0
    } else {
        free.iter().map(|&t| y[t] * grad[t]).sum::<f64>() / free.len() as f64
    };

    let dual_objective = alpha.iter().sum::<f64>()
        - 0.5 * (0..n).map(|t| alpha[t] * (grad[t] + 1.0)).sum::<f64>();
    let support: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0).collect();
    let mut model = SvmModel {
        kernel,
        c,
        class_bounds: (c_pos, c_neg),
        support_vectors: support.iter().map(|&t| xs[t].clone()).collect(),
        coefficients: support.iter().map(|&t| alpha[t] * y[t]).collect(),
        bias: -rho,
        feature_mean: mean,
        feature_scale: scale,
        separable: false,
        kkt_residual: violation,
        iterations,
        dual_objective,
    };
    model.separable = raw
        .iter()
        .zip(&y)
        .all(|(x, yi)| model.decision(x).map(|f| f * yi > 0.0).unwrap_or(false));
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn plain(kernel: Kernel) -> SvmConfig {
        SvmConfig {
            kernel,
            scaling: Scaling::None,
            class_weight: ClassWeight::Uniform,
            ..SvmConfig::default()
        }
    }

    #[test]
    fn two_point_linear_problem() {
        let m = train_svm(&[vec![1.0, 1.0]], &[vec![0.0, 0.0]], &plain(Kernel::Linear)).unwrap();
        let pos = m.decision(&[1.0, 1.0]).unwrap();
        let neg = m.decision(&[0.0, 0.0]).unwrap();
        assert!(pos > 0.0 && neg < 0.0);
        // The boundary crosses the segment between the two points at its middle.
        assert!(m.decision(&[0.5, 0.5]).unwrap().abs() < 1e-6);
        assert!(m.separable);
    }

    /// Projected gradient ascent on the dual, a slow independent oracle.
    fn oracle_dual(x: &[Vec<f64>], y: &[f64], kernel: Kernel, c: &[f64]) -> f64 {
        let n = x.len();
        let q: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| y[i] * y[j] * kernel.eval(&x[i], &x[j])).collect())
            .collect();
        let mut a = vec![0.0; n];
        // Coordinate ascent over pairs keeps y'a = 0 exactly.
        for _ in 0..20_000 {
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    // Move along e_i - y_i y_j e_j.
                    let s = -y[i] * y[j];
                    let gi = 1.0 - (0..n).map(|k| q[i][k] * a[k]).sum::<f64>();
                    let gj = 1.0 - (0..n).map(|k| q[j][k] * a[k]).sum::<f64>();
                    let slope = gi + s * gj;
                    let curv = q[i][i] + q[j][j] + 2.0 * s * q[i][j];
                    if curv <= 1e-12 {
                        continue;
                    }
                    let mut t = slope / curv;
                    let (lo_i, hi_i) = (-a[i], c[i] - a[i]);
                    let (lo_j, hi_j) = if s > 0.0 { (-a[j], c[j] - a[j]) } else { (a[j] - c[j], a[j]) };
                    t = t.clamp(lo_i.max(lo_j), hi_i.min(hi_j));
                    a[i] += t;
                    a[j] += s * t;
                }
            }
        }
        let quad: f64 = (0..n).map(|i| (0..n).map(|j| a[i] * q[i][j] * a[j]).sum::<f64>()).sum();
        a.iter().sum::<f64>() - 0.5 * quad
    }

    #[test]
    fn xor_is_solved_by_the_cubic_kernel() {
        let pos = vec![vec![-1.0, 1.0], vec![1.0, -1.0]];
        let neg = vec![vec![-1.0, -1.0], vec![1.0, 1.0]];
        let m = train_svm(&pos, &neg, &plain(Kernel::cubic())).unwrap();
        for p in &pos {
            assert!(m.decision(p).unwrap() > 0.0);
        }
        for q in &neg {
            assert!(m.decision(q).unwrap() < 0.0);
        }
        let xs: Vec<Vec<f64>> = pos.iter().chain(&neg).cloned().collect();
        let oracle = oracle_dual(&xs, &[1.0, 1.0, -1.0, -1.0], m.kernel, &[1.0; 4]);
        assert!((m.dual_objective - oracle).abs() < 1e-6, "{} vs {oracle}", m.dual_objective);
    }

    #[test]
    fn balanced_bounds_match_the_oracle() {
        // Overlapping classes of unequal size, so some bounds are active.
        let pos = vec![vec![0.2, 0.1], vec![-0.3, 0.4], vec![0.5, -0.2]];
        let neg = vec![
            vec![0.1, 0.2],
            vec![-0.4, -0.5],
            vec![0.6, 0.3],
            vec![-0.2, 0.0],
            vec![0.3, -0.6],
            vec![-0.6, 0.5],
        ];
        let cfg = SvmConfig {
            class_weight: ClassWeight::Balanced,
            ..plain(Kernel::cubic())
        };
        let m = train_svm(&pos, &neg, &cfg).unwrap();
        // 9 samples: 9 / (2 * 3) and 9 / (2 * 6).
        assert_eq!(m.class_bounds, (1.5, 0.75));
        let xs: Vec<Vec<f64>> = pos.iter().chain(&neg).cloned().collect();
        let y: Vec<f64> = (0..9).map(|i| if i < 3 { 1.0 } else { -1.0 }).collect();
        let bounds: Vec<f64> = y.iter().map(|&v| if v > 0.0 { 1.5 } else { 0.75 }).collect();
        let oracle = oracle_dual(&xs, &y, m.kernel, &bounds);
        assert!((m.dual_objective - oracle).abs() < 1e-6, "{} vs {oracle}", m.dual_objective);
    }

    #[test]
    fn identical_data_is_degenerate_and_conflicts_are_soft() {
        let same = vec![vec![1.0, 2.0]; 3];
        assert!(matches!(
            train_svm(&same, &same, &SvmConfig::default()),
            Err(Error::DegenerateMargin(_))
        ));
        let pos = vec![vec![1.0, 2.0], vec![1.5, 2.5], vec![0.5, 1.0]];
        let neg = vec![vec![1.0, 2.0], vec![-1.0, -2.0], vec![-1.5, 0.0]];
        let m = train_svm(&pos, &neg, &SvmConfig::default()).unwrap();
        assert!(!m.separable);
        assert!(m.coefficients.iter().all(|a| a.abs() <= 1.0 + 1e-12));
    }

    fn random_problem(seed: u64, n: usize, dim: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |shift: f64| -> Vec<f64> { (0..dim).map(|_| rng.random_range(-1.0..1.0) + shift).collect() };
        let pos = (0..n / 2).map(|_| draw(0.4)).collect();
        let neg = (0..n - n / 2).map(|_| draw(-0.4)).collect();
        (pos, neg)
    }

    fn primal_objective(m: &SvmModel, pos: &[Vec<f64>], neg: &[Vec<f64>]) -> f64 {
        let w2: f64 = m
            .support_vectors
            .iter()
            .zip(&m.coefficients)
            .map(|(a, ca)| {
                m.support_vectors
                    .iter()
                    .zip(&m.coefficients)
                    .map(|(b, cb)| ca * cb * m.kernel.eval(a, b))
                    .sum::<f64>()
            })
            .sum();
        let hinge: f64 = pos
            .iter()
            .map(|x| (1.0 - m.decision(x).unwrap()).max(0.0))
            .map(|h| h * m.class_bounds.0)
            .chain(neg.iter().map(|x| (1.0 + m.decision(x).unwrap()).max(0.0) * m.class_bounds.1))
            .sum();
        0.5 * w2 + hinge
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn duality_gap_is_small(seed in 0u64..10_000) {
            let (pos, neg) = random_problem(seed, 40, 5);
            let m = train_svm(&pos, &neg, &SvmConfig::default()).unwrap();
            let primal = primal_objective(&m, &pos, &neg);
            prop_assert!(m.kkt_residual < 1e-3);
            prop_assert!(primal - m.dual_objective >= -1e-9);
            prop_assert!(primal - m.dual_objective < 1e-3 * primal.abs().max(1e-12), "primal {} dual {}", primal, m.dual_objective);
        }

        #[test]
        fn duplicating_an_inactive_point_changes_nothing(seed in 0u64..10_000) {
            let (pos, neg) = random_problem(seed, 30, 4);
            let cfg = plain(Kernel::cubic());
            let m = train_svm(&pos, &neg, &cfg).unwrap();
            // Pick a positive that is not a support vector, if any.
            let Some(idle) = pos.iter().find(|x| !m.support_vectors.contains(x)).cloned() else {
                return Ok(());
            };
            let mut more = pos.clone();
            more.push(idle);
            let m2 = train_svm(&more, &neg, &cfg).unwrap();
            for probe in pos.iter().chain(&neg) {
                let (a, b) = (m.decision(probe).unwrap(), m2.decision(probe).unwrap());
                prop_assert!((a - b).abs() < 1e-4 * (1.0 + a.abs()), "{} vs {}", a, b);
            }
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (pos, neg) = random_problem(5, 30, 6);
        let a = train_svm(&pos, &neg, &SvmConfig::default()).unwrap();
        let b = train_svm(&pos, &neg, &SvmConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}
