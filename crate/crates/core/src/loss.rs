//! Deterministic loss oracles over per-vertex parameters.

use serde::{Deserialize, Serialize};

/// A loss `L(theta) >= 0` with its gradient.
pub trait LossOracle: Sync {
    /// Value and gradient at `theta`.
    fn evaluate(&self, theta: &[f64]) -> (f64, Vec<f64>);

    fn value(&self, theta: &[f64]) -> f64 {
        self.evaluate(theta).0
    }

    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        self.evaluate(theta).1
    }
}

/// The zero loss. Flow driven by it is pure curvature flow.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroLoss;

impl LossOracle for ZeroLoss {
    fn evaluate(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        (0.0, vec![0.0; theta.len()])
    }
}

/// Separable quadratic `1/2 sum_i h_i (theta_i - c_i)^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quadratic {
    pub curvature: Vec<f64>,
    pub center: Vec<f64>,
}

impl Quadratic {
    pub fn new(curvature: Vec<f64>) -> Self {
        let center = vec![0.0; curvature.len()];
        Quadratic { curvature, center }
    }

    /// Eigenvalues spanning `[1, condition]` geometrically, laid out around a
    /// ring so that neighboring vertices get neighboring values.
    pub fn ring_conditioned(n: usize, condition: f64) -> Self {
        let curvature = (0..n)
            .map(|i| {
                let s = if n > 1 {
                    0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
                } else {
                    0.0
                };
                condition.powf(s)
            })
            .collect();
        Quadratic::new(curvature)
    }
}

impl LossOracle for Quadratic {
    fn evaluate(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let mut value = 0.0;
        let grad = theta
            .iter()
            .zip(&self.curvature)
            .zip(&self.center)
            .map(|((t, h), c)| {
                let d = t - c;
                value += 0.5 * h * d * d;
                h * d
            })
            .collect();
        (value, grad)
    }
}

/// Chained Rosenbrock `sum_i 100 (theta_{i+1} - theta_i^2)^2 + (1 - theta_i)^2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct RosenbrockSum;

impl LossOracle for RosenbrockSum {
    fn evaluate(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let n = theta.len();
        let mut grad = vec![0.0; n];
        let mut value = 0.0;
        for i in 0..n.saturating_sub(1) {
            let (x, y) = (theta[i], theta[i + 1]);
            let a = y - x * x;
            let b = 1.0 - x;
            value += 100.0 * a * a + b * b;
            grad[i] += -400.0 * x * a - 2.0 * b;
            grad[i + 1] += 200.0 * a;
        }
        (value, grad)
    }
}

/// Pulls parameters toward stored targets: `1/2 sum_i (theta_i - t_i)^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticEmbedding {
    pub targets: Vec<f64>,
}

impl LossOracle for SyntheticEmbedding {
    fn evaluate(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let mut value = 0.0;
        let grad = theta
            .iter()
            .zip(&self.targets)
            .map(|(t, c)| {
                value += 0.5 * (t - c) * (t - c);
                t - c
            })
            .collect();
        (value, grad)
    }
}

/// Central finite-difference gradient of the loss value.
pub fn finite_difference_gradient(loss: &dyn LossOracle, theta: &[f64], h: f64) -> Vec<f64> {
    let mut x = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let up = loss.value(&x);
            x[i] = orig - h;
            let down = loss.value(&x);
            x[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Symmetrized Hessian from central differences of the gradient.
pub fn finite_difference_hessian(loss: &dyn LossOracle, theta: &[f64], h: f64) -> Vec<Vec<f64>> {
    let n = theta.len();
    let mut x = theta.to_vec();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let orig = x[j];
        x[j] = orig + h;
        let up = loss.gradient(&x);
        x[j] = orig - h;
        let down = loss.gradient(&x);
        x[j] = orig;
        cols.push(
            up.iter()
                .zip(&down)
                .map(|(u, d)| (u - d) / (2.0 * h))
                .collect::<Vec<_>>(),
        );
    }
    (0..n)
        .map(|i| (0..n).map(|j| 0.5 * (cols[j][i] + cols[i][j])).collect())
        .collect()
}

/// Diagonal of the finite-difference Hessian, `d^2 L / d theta_i^2`.
pub fn finite_difference_hessian_diagonal(
    loss: &dyn LossOracle,
    theta: &[f64],
    h: f64,
) -> Vec<f64> {
    let mut x = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let up = loss.gradient(&x)[i];
            x[i] = orig - h;
            let down = loss.gradient(&x)[i];
            x[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_gradient(loss: &dyn LossOracle, theta: &[f64]) {
        let (_, g) = loss.evaluate(theta);
        let fd = finite_difference_gradient(loss, theta, 1e-6);
        for (a, b) in g.iter().zip(&fd) {
            let scale = a.abs().max(1.0);
            assert!((a - b).abs() / scale < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let theta = [0.3, -1.2, 0.8, 2.0, -0.1];
        check_gradient(&Quadratic::ring_conditioned(5, 100.0), &theta);
        check_gradient(&RosenbrockSum, &theta);
        check_gradient(
            &SyntheticEmbedding {
                targets: vec![1.0, 0.0, -1.0, 0.5, 0.25],
            },
            &theta,
        );
    }

    #[test]
    fn ring_conditioning_spans_range() {
        let q = Quadratic::ring_conditioned(32, 100.0);
        let min = q.curvature.iter().copied().fold(f64::INFINITY, f64::min);
        let max = q.curvature.iter().copied().fold(0.0, f64::max);
        assert_eq!(min, 1.0);
        assert!((max - 100.0).abs() < 1e-9);
    }

    #[test]
    fn hessian_of_quadratic() {
        let q = Quadratic::new(vec![1.0, 4.0, 9.0]);
        let h = finite_difference_hessian(&q, &[0.5, -0.5, 1.0], 1e-4);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { q.curvature[i] } else { 0.0 };
                assert!((h[i][j] - want).abs() <= 1e-4 * want.max(1.0));
            }
        }
        let d = finite_difference_hessian_diagonal(&q, &[0.5, -0.5, 1.0], 1e-4);
        assert!((d[2] - 9.0).abs() < 1e-8);
    }
}
