//! Soft-margin support vector machines trained by SMO with second-order
//! working-set selection, combined one-vs-rest for multiclass problems.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::knn::argmax;
use crate::dataset::LabeledVectors;
use crate::error::{Error, Result};
use crate::math;

const TAU: f64 = 1e-12;
pub const DEFAULT_TOLERANCE: f64 = 1e-3;
pub const DEFAULT_MAX_ITER: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kernel", rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    /// exp(-gamma * |x - y|^2)
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => math::dot(a, b),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                math::exp(-gamma * d2)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    #[serde(flatten)]
    pub kernel: Kernel,
    #[serde(rename = "C")]
    pub c: f64,
}

impl SvmConfig {
    pub fn linear(c: f64) -> Self {
        Self { kernel: Kernel::Linear, c }
    }

    pub fn rbf(c: f64, gamma: f64) -> Self {
        Self { kernel: Kernel::Rbf { gamma }, c }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::BadArgument("C must be positive".into()));
        }
        if let Kernel::Rbf { gamma } = self.kernel {
            if !(gamma > 0.0) || !gamma.is_finite() {
                return Err(Error::BadArgument("gamma must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Dense symmetric Gram matrix over a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    n: usize,
    values: Vec<f64>,
}

impl KernelMatrix {
    pub fn new(x: &[Vec<f64>], kernel: Kernel) -> Self {
        let n = x.len();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let k = kernel.eval(&x[i], &x[j]);
                values[i * n + j] = k;
                values[j * n + i] = k;
            }
        }
        Self { n, values }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }
}

/// Dual solution of one binary problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
}

impl BinarySolution {
    /// Dual objective `0.5 a'Qa - sum(a)` with `Q_ij = y_i y_j K_ij`.
    pub fn objective(&self, k: &KernelMatrix, y: &[f64]) -> f64 {
        dual_objective(&self.alpha, k, y)
    }
}

pub fn dual_objective(alpha: &[f64], k: &KernelMatrix, y: &[f64]) -> f64 {
    let n = alpha.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * k.get(i, j);
        }
    }
    0.5 * quad - alpha.iter().sum::<f64>()
}

/// Solves `min 0.5 a'Qa - e'a` s.t. `0 <= a <= C`, `y'a = 0` for labels in {-1, +1}.
pub fn smo_binary(k: &KernelMatrix, y: &[f64], c: f64, eps: f64, max_iter: usize) -> Result<BinarySolution> {
    let n = k.len();
    if y.len() != n {
        return Err(Error::BadArgument("label count differs from kernel size".into()));
    }
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let diag: Vec<f64> = (0..n).map(|i| k.get(i, i)).collect();
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;
    let mut iterations = 0;
    loop {
        // Maximal violating pair with second-order choice of j.
        let mut gmax = f64::NEG_INFINITY;
        let mut gmax2 = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            let v = -y[t] * grad[t];
            let in_up = if y[t] > 0.0 { !upper(alpha[t]) } else { !lower(alpha[t]) };
            if in_up && v > gmax {
                gmax = v;
                i_sel = Some(t);
            }
        }
        let mut j_sel = None;
        if let Some(i) = i_sel {
            let ki = k.row(i);
            let mut best = f64::INFINITY;
            for t in 0..n {
                let in_low = if y[t] > 0.0 { !lower(alpha[t]) } else { !upper(alpha[t]) };
                if !in_low {
                    continue;
                }
                let v = -y[t] * grad[t];
                if -v > gmax2 {
                    gmax2 = -v;
                }
                let b = gmax - v;
                if b > 0.0 {
                    let mut a = diag[i] + diag[t] - 2.0 * ki[t];
                    if a <= 0.0 {
                        a = TAU;
                    }
                    let obj = -(b * b) / a;
                    if obj < best {
                        best = obj;
                        j_sel = Some(t);
                    }
                }
            }
        }
        let (Some(i), Some(j)) = (i_sel, j_sel) else { break };
        if gmax + gmax2 < eps {
            break;
        }
        if iterations >= max_iter {
            return Err(Error::TrainingDiverged(alloc::format!("SMO did not converge in {max_iter} iterations")));
        }
        iterations += 1;

        let qij = y[i] * y[j] * k.get(i, j);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let mut quad = diag[i] + diag[j] + 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
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
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = diag[i] + diag[j] - 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        let (ki, kj) = (k.row(i), k.row(j));
        for t in 0..n {
            grad[t] += y[t] * (y[i] * ki[t] * di + y[j] * kj[t] * dj);
        }
    }
    Ok(BinarySolution { rho: compute_rho(&alpha, &grad, y, c), alpha, iterations })
}

fn compute_rho(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free = 0usize;
    let mut sum_free = 0.0;
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    if free > 0 {
        sum_free / free as f64
    } else {
        (ub + lb) / 2.0
    }
}

/// One binary machine of the one-vs-rest ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Machine {
    /// `coef[s] = alpha * y` for support vector `s` of the shared support set.
    Trained { coef: Vec<f64>, rho: f64 },
    /// Class absent from (or alone in) the training data.
    Constant { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub config: SvmConfig,
    pub support: Vec<Vec<f64>>,
    pub machines: Vec<Machine>,
}

fn one_vs_rest_labels(labels: &[usize], class: usize) -> Vec<f64> {
    labels.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect()
}

/// Per-class dual solutions over a shared kernel matrix.
pub fn svm_solve(train: &LabeledVectors, config: &SvmConfig) -> Result<Vec<Option<BinarySolution>>> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::NotFitted);
    }
    let k = KernelMatrix::new(&train.features, config.kernel);
    let counts = train.class_counts();
    let max_iter = DEFAULT_MAX_ITER.max(100 * train.len());
    (0..train.n_classes())
        .map(|c| {
            if counts[c] == 0 || counts[c] == train.len() {
                return Ok(None);
            }
            let y = one_vs_rest_labels(&train.labels, c);
            smo_binary(&k, &y, config.c, DEFAULT_TOLERANCE, max_iter).map(Some)
        })
        .collect()
}

pub fn svm_train(train: &LabeledVectors, config: SvmConfig) -> Result<SvmModel> {
    let solutions = svm_solve(train, &config)?;
    let counts = train.class_counts();
    let used: Vec<usize> = (0..train.len())
        .filter(|&i| solutions.iter().flatten().any(|s| s.alpha[i] > 0.0))
        .collect();
    let machines = solutions
        .iter()
        .enumerate()
        .map(|(c, s)| match s {
            Some(s) => Machine::Trained {
                coef: used
                    .iter()
                    .map(|&i| s.alpha[i] * if train.labels[i] == c { 1.0 } else { -1.0 })
                    .collect(),
                rho: s.rho,
            },
            None => Machine::Constant { value: if counts[c] == 0 { f64::NEG_INFINITY } else { f64::INFINITY } },
        })
        .collect();
    Ok(SvmModel { config, support: used.iter().map(|&i| train.features[i].clone()).collect(), machines })
}

impl SvmModel {
    pub fn decision_values(&self, x: &[f64]) -> Vec<f64> {
        let kx: Vec<f64> = self.support.iter().map(|s| self.config.kernel.eval(s, x)).collect();
        self.machines
            .iter()
            .map(|m| match m {
                Machine::Trained { coef, rho } => math::dot(coef, &kx) - rho,
                Machine::Constant { value } => *value,
            })
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        if self.support.first().is_some_and(|s| s.len() != x.len()) {
            return Err(Error::BadArgument("query dimension differs from training data".into()));
        }
        Ok(argmax(&self.decision_values(x)))
    }
}

pub fn svm_predict(model: &SvmModel, x: &[f64]) -> Result<usize> {
    model.predict(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn two_points() -> LabeledVectors {
        LabeledVectors::new(vec![vec![0.0], vec![2.0]], vec![0, 1], vec!["neg".to_string(), "pos".to_string()])
            .unwrap()
    }

    #[test]
    fn two_point_boundary_is_the_midpoint() {
        let d = two_points();
        let k = KernelMatrix::new(&d.features, Kernel::Linear);
        let s = smo_binary(&k, &[-1.0, 1.0], 1e6, 1e-3, 1000).unwrap();
        assert_eq!(s.alpha, vec![0.5, 0.5]);
        assert_eq!(s.rho, 1.0);
        let model = svm_train(&d, SvmConfig::linear(1e6)).unwrap();
        let f = |x: f64| model.decision_values(&[x])[1];
        assert_eq!(f(1.0), 0.0);
        assert_eq!(f(0.0), -1.0);
        assert_eq!(f(2.0), 1.0);
    }

    #[test]
    fn duals_respect_box_and_equality() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.71).cos()]).collect();
        let y: Vec<f64> = x.iter().map(|p| if p[0] + 0.3 * p[1] > 0.1 { 1.0 } else { -1.0 }).collect();
        let k = KernelMatrix::new(&x, Kernel::Rbf { gamma: 0.5 });
        let s = smo_binary(&k, &y, 10.0, 1e-3, 100_000).unwrap();
        assert!(s.alpha.iter().all(|&a| (0.0..=10.0).contains(&a)));
        let balance: f64 = s.alpha.iter().zip(&y).map(|(a, y)| a * y).sum();
        assert!(balance.abs() < 1e-6);
    }

    #[test]
    fn iteration_cap_reports_divergence() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let k = KernelMatrix::new(&x, Kernel::Linear);
        assert!(matches!(smo_binary(&k, &y, 100.0, 1e-3, 1), Err(Error::TrainingDiverged(_))));
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        assert!(SvmConfig::linear(0.0).validate().is_err());
        assert!(SvmConfig::rbf(1.0, -1.0).validate().is_err());
    }
}
