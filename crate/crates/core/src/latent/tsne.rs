//! Exact t-SNE for small point sets.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{seeded_rng, Matrix};

const P_FLOOR: f64 = 1e-12;
const ENTROPY_TOL: f64 = 1e-5;
const MAX_BISECTIONS: usize = 50;
const MIN_GAIN: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    /// Iteration at which momentum switches and exaggeration ends.
    pub switch_iteration: usize,
    pub early_exaggeration: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            switch_iteration: 250,
            early_exaggeration: 12.0,
            seed: 0,
        }
    }
}

impl TsneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.perplexity.is_nan() || self.perplexity < 2.0 {
            return Err(Error::Config(format!("perplexity must be ≥ 2, got {}", self.perplexity)));
        }
        if self.iterations == 0 {
            return Err(Error::Config("t-SNE needs at least one iteration".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config("t-SNE learning rate must be positive".into()));
        }
        Ok(())
    }

    /// Perplexity actually used for `n` points: capped at `(n-1)/3`, and
    /// never below 1 so the entropy target stays reachable.
    pub fn effective_perplexity(&self, n: usize) -> f64 {
        self.perplexity.min((n as f64 - 1.0) / 3.0).max(1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneResult {
    pub coords: Vec<[f64; 2]>,
    /// KL(P‖Q) at the initial layout.
    pub initial_kl: f64,
    /// KL(P‖Q) at the final layout.
    pub final_kl: f64,
    pub perplexity: f64,
}

fn squared_distances(points: &[Vec<f64>]) -> Matrix {
    let n = points.len();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b).powi(2)).sum();
            d.set(i, j, v);
            d.set(j, i, v);
        }
    }
    d
}

/// Row-conditional affinities `p(j|i)`, with each row's Gaussian precision
/// bisected until its perplexity matches `perplexity`.
pub fn conditional_probabilities(points: &[Vec<f64>], perplexity: f64) -> Matrix {
    let n = points.len();
    let d = squared_distances(points);
    let target = perplexity.ln();
    let mut p = Matrix::zeros(n, n);
    let mut row = vec![0.0; n];
    for i in 0..n {
        let dmin = (0..n).filter(|&j| j != i).map(|j| d.get(i, j)).fold(f64::INFINITY, f64::min);
        let (mut beta, mut lo, mut hi) = (1.0, f64::NEG_INFINITY, f64::INFINITY);
        for _ in 0..MAX_BISECTIONS {
            // Shifting by the row minimum leaves the normalised row unchanged.
            let mut sum = 0.0;
            let mut weighted = 0.0;
            for j in 0..n {
                row[j] = if j == i { 0.0 } else { (-(d.get(i, j) - dmin) * beta).exp() };
                sum += row[j];
                weighted += row[j] * (d.get(i, j) - dmin);
            }
            let entropy = sum.ln() + beta * weighted / sum;
            row.iter_mut().for_each(|v| *v /= sum);
            let diff = entropy - target;
            if diff.abs() < ENTROPY_TOL {
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = if lo.is_finite() { (beta + lo) / 2.0 } else { beta / 2.0 };
            }
        }
        p.row_mut(i).copy_from_slice(&row);
    }
    p
}

/// Symmetrised joint affinities `(P + Pᵀ) / 2n`, off-diagonal floored at 1e-12.
pub fn joint_probabilities(points: &[Vec<f64>], perplexity: f64) -> Matrix {
    let n = points.len();
    let cond = conditional_probabilities(points, perplexity);
    let mut p = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let v = (cond.get(i, j) + cond.get(j, i)) / (2.0 * n as f64);
                p.set(i, j, v.max(P_FLOOR));
            }
        }
    }
    p
}

/// Student-t kernel values `1/(1+|yi-yj|²)` (zero diagonal) and their sum.
fn student_kernel(y: &[[f64; 2]]) -> (Matrix, f64) {
    let n = y.len();
    let mut num = Matrix::zeros(n, n);
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let v = 1.0 / (1.0 + dx * dx + dy * dy);
            num.set(i, j, v);
            num.set(j, i, v);
            sum += 2.0 * v;
        }
    }
    (num, sum)
}

/// KL(P‖Q) for the layout `y`.
pub fn tsne_objective(p: &Matrix, y: &[[f64; 2]]) -> f64 {
    let (num, sum) = student_kernel(y);
    let n = y.len();
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let pij = p.get(i, j);
                let qij = (num.get(i, j) / sum).max(P_FLOOR);
                kl += pij * (pij / qij).ln();
            }
        }
    }
    kl
}

/// `∂KL/∂yᵢ = 4 Σⱼ (pᵢⱼ - qᵢⱼ)(yᵢ - yⱼ)/(1 + |yᵢ - yⱼ|²)`.
pub fn tsne_gradient(p: &Matrix, y: &[[f64; 2]]) -> Vec<[f64; 2]> {
    gradient_scaled(p, 1.0, y)
}

fn gradient_scaled(p: &Matrix, exaggeration: f64, y: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let (num, sum) = student_kernel(y);
    let n = y.len();
    let mut grad = vec![[0.0; 2]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let w = (exaggeration * p.get(i, j) - num.get(i, j) / sum) * num.get(i, j);
                grad[i][0] += 4.0 * w * (y[i][0] - y[j][0]);
                grad[i][1] += 4.0 * w * (y[i][1] - y[j][1]);
            }
        }
    }
    grad
}

/// Projects points to 2-D by gradient descent on KL(P‖Q) with momentum,
/// per-coordinate adaptive gains and early exaggeration.
pub fn tsne(points: &[Vec<f64>], config: &TsneConfig) -> Result<TsneResult> {
    config.validate()?;
    let n = points.len();
    if n < 4 {
        return Err(Error::Data(format!("t-SNE needs at least 4 points, got {n}")));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Shape("t-SNE points differ in dimension".into()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("t-SNE input holds non-finite values".into()));
    }

    let perplexity = config.effective_perplexity(n);
    let p = joint_probabilities(points, perplexity);

    let mut rng = seeded_rng(config.seed);
    let init = Normal::new(0.0, 1e-4).expect("valid std");
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [init.sample(&mut rng), init.sample(&mut rng)]).collect();
    let mut velocity = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let initial_kl = tsne_objective(&p, &y);

    for it in 0..config.iterations {
        let early = it < config.switch_iteration;
        let exaggeration = if early { config.early_exaggeration } else { 1.0 };
        let momentum = if early { config.initial_momentum } else { config.final_momentum };
        let grad = gradient_scaled(&p, exaggeration, &y);
        for i in 0..n {
            for c in 0..2 {
                let g = grad[i][c];
                gains[i][c] = if (g > 0.0) != (velocity[i][c] > 0.0) {
                    gains[i][c] + 0.2
                } else {
                    (gains[i][c] * 0.8).max(MIN_GAIN)
                };
                velocity[i][c] = momentum * velocity[i][c] - config.learning_rate * gains[i][c] * g;
                y[i][c] += velocity[i][c];
            }
        }
        for c in 0..2 {
            let mean = y.iter().map(|v| v[c]).sum::<f64>() / n as f64;
            y.iter_mut().for_each(|v| v[c] -= mean);
        }
        if y.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("t-SNE diverged at iteration {}", it + 1)));
        }
    }
    let final_kl = tsne_objective(&p, &y);
    Ok(TsneResult { coords: y, initial_kl, final_kl, perplexity })
}
