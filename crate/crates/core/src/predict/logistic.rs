//! L2-regularised logistic regression fitted by batch gradient descent on
//! standardised features.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub const GRAD_TOL: f64 = 1e-6;
pub const MAX_ITERS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl LogisticModel {
    pub fn fit(x: &[Vec<f64>], y: &[bool], l2: f64) -> Self {
        let n = x.len();
        let d = x[0].len();
        let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
        let scale: Vec<f64> = (0..d)
            .map(|j| {
                let var = x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n as f64;
                if var > 0.0 { var.sqrt() } else { 1.0 }
            })
            .collect();
        // Design matrix with a trailing column of ones for the bias.
        let z = DMatrix::from_fn(n, d + 1, |i, j| if j == d { 1.0 } else { (x[i][j] - mean[j]) / scale[j] });
        let target: Vec<f64> = y.iter().map(|&v| f64::from(u8::from(v))).collect();

        // 1/L for L = lambda_max(Z'Z)/(4n) + l2 guarantees monotone descent.
        let gram = z.transpose() * &z / n as f64;
        let lmax = gram.symmetric_eigenvalues().max();
        let step = 1.0 / (0.25 * lmax + l2);

        let mut theta = vec![0.0; d + 1];
        let mut iterations = 0;
        let mut converged = false;
        while iterations < MAX_ITERS {
            let mut grad = vec![0.0; d + 1];
            for i in 0..n {
                let t: f64 = (0..=d).map(|j| z[(i, j)] * theta[j]).sum();
                let r = sigmoid(t) - target[i];
                for (j, g) in grad.iter_mut().enumerate() {
                    *g += r * z[(i, j)];
                }
            }
            for (j, g) in grad.iter_mut().enumerate() {
                *g /= n as f64;
                if j < d {
                    *g += l2 * theta[j];
                }
            }
            if grad.iter().map(|g| g * g).sum::<f64>().sqrt() < GRAD_TOL {
                converged = true;
                break;
            }
            for (t, g) in theta.iter_mut().zip(&grad) {
                *t -= step * g;
            }
            iterations += 1;
        }
        let bias = theta.pop().unwrap_or(0.0);
        Self { mean, scale, weights: theta, bias, iterations, converged }
    }

    pub fn probability(&self, x: &[f64]) -> f64 {
        let t = self.bias
            + x.iter().zip(&self.mean).zip(&self.scale).zip(&self.weights).map(|(((v, m), s), w)| w * (v - m) / s).sum::<f64>();
        sigmoid(t)
    }

    pub fn predict(&self, x: &[f64]) -> bool {
        self.probability(x) > 0.5
    }
}
