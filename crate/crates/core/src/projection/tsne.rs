use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::seed;

const EXAGGERATION: f64 = 12.0;
const EXAGGERATION_ITERS: usize = 100;
const MOMENTUM_SWITCH: usize = 250;
const MIN_GAIN: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneDiagnostics {
    pub initial_kl: f64,
    pub final_kl: f64,
    /// Perplexity after clamping below (n − 1) / 3.
    pub perplexity: f64,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub iterations: usize,
}

/// Symmetric joint probabilities P (n × n, zero diagonal) matching the
/// target perplexity per point.
fn joint_probabilities(z: &[f64], n: usize, p: usize, perplexity: f64) -> Vec<f64> {
    let mut d2 = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let s: f64 = (0..p).map(|k| (z[i * p + k] - z[j * p + k]).powi(2)).sum();
            d2[i * n + j] = s;
            d2[j * n + i] = s;
        }
    }

    let target = perplexity.ln();
    let mut cond = vec![0.0; n * n];
    let mut row = vec![0.0; n];
    for i in 0..n {
        let (mut beta, mut lo, mut hi) = (1.0f64, f64::NEG_INFINITY, f64::INFINITY);
        let dmin = (0..n).filter(|&j| j != i).map(|j| d2[i * n + j]).fold(f64::INFINITY, f64::min);
        for _ in 0..200 {
            let mut sum = 0.0;
            let mut weighted = 0.0;
            for j in 0..n {
                row[j] = if j == i { 0.0 } else { (-(d2[i * n + j] - dmin) * beta).exp() };
                sum += row[j];
                weighted += row[j] * (d2[i * n + j] - dmin);
            }
            let entropy = sum.ln() + beta * weighted / sum;
            let diff = entropy - target;
            if diff.abs() < 1e-10 {
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
        let sum: f64 = row.iter().sum();
        for j in 0..n {
            cond[i * n + j] = row[j] / sum;
        }
    }

    let mut joint = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                joint[i * n + j] = ((cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64)).max(1e-12);
            }
        }
    }
    joint
}

/// Student-t kernel numerators and their sum.
fn affinities(y: &[f64], n: usize) -> (Vec<f64>, f64) {
    let mut num = vec![0.0; n * n];
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = y[2 * i] - y[2 * j];
            let dy = y[2 * i + 1] - y[2 * j + 1];
            let v = 1.0 / (1.0 + dx * dx + dy * dy);
            num[i * n + j] = v;
            num[j * n + i] = v;
            total += 2.0 * v;
        }
    }
    (num, total)
}

/// KL(P ‖ Q) for a 2-D embedding `y`.
pub fn kl_divergence(joint: &[f64], y: &[f64], n: usize) -> f64 {
    let (num, total) = affinities(y, n);
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let pij = joint[i * n + j];
                let qij = (num[i * n + j] / total).max(1e-300);
                kl += pij * (pij / qij).ln();
            }
        }
    }
    kl
}

/// Exact t-SNE: gradient descent with momentum, per-parameter gains and
/// early exaggeration, from a seeded N(0, 1e-4²) start. Single-threaded so the
/// result is bit-identical for a given seed.
pub fn tsne(z: &[f64], n: usize, p: usize, perplexity: f64, iters: usize, rng_seed: u64) -> (Vec<[f64; 2]>, TsneDiagnostics) {
    let max_perplexity = (n as f64 - 1.0) / 3.0;
    let perplexity = if perplexity >= max_perplexity { max_perplexity.max(1.0) } else { perplexity.max(1.0) };
    let learning_rate = n as f64 / EXAGGERATION;
    let exaggeration_iters = EXAGGERATION_ITERS.min(iters / 2);

    let joint = joint_probabilities(z, n, p, perplexity);

    let mut rng = seed::rng_for(rng_seed, "tsne-init", 0);
    let normal = Normal::new(0.0, 1e-4).expect("valid normal");
    let mut y: Vec<f64> = (0..2 * n).map(|_| normal.sample(&mut rng)).collect();
    let initial_kl = kl_divergence(&joint, &y, n);

    let mut update = vec![0.0; 2 * n];
    let mut gains = vec![1.0f64; 2 * n];
    let mut grad = vec![0.0; 2 * n];
    for it in 0..iters {
        let exaggeration = if it < exaggeration_iters { EXAGGERATION } else { 1.0 };
        let momentum = if it < MOMENTUM_SWITCH { 0.5 } else { 0.8 };
        let (num, total) = affinities(&y, n);

        for i in 0..n {
            let (mut gx, mut gy) = (0.0, 0.0);
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = (exaggeration * joint[i * n + j] - num[i * n + j] / total) * num[i * n + j];
                gx += w * (y[2 * i] - y[2 * j]);
                gy += w * (y[2 * i + 1] - y[2 * j + 1]);
            }
            grad[2 * i] = 4.0 * gx;
            grad[2 * i + 1] = 4.0 * gy;
        }

        for k in 0..2 * n {
            gains[k] = if (grad[k] > 0.0) != (update[k] > 0.0) { gains[k] + 0.2 } else { gains[k] * 0.8 };
            gains[k] = gains[k].max(MIN_GAIN);
            update[k] = momentum * update[k] - learning_rate * gains[k] * grad[k];
            y[k] += update[k];
        }
        let (mx, my) = (0..n).fold((0.0, 0.0), |(a, b), i| (a + y[2 * i], b + y[2 * i + 1]));
        for i in 0..n {
            y[2 * i] -= mx / n as f64;
            y[2 * i + 1] -= my / n as f64;
        }
    }

    let final_kl = kl_divergence(&joint, &y, n);
    let coords = y.chunks(2).map(|c| [c[0], c[1]]).collect();
    (
        coords,
        TsneDiagnostics {
            initial_kl,
            final_kl,
            perplexity,
            learning_rate,
            early_exaggeration: EXAGGERATION,
            exaggeration_iters,
            iterations: iters,
        },
    )
}
