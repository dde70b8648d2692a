use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::pairwise_distances;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdsDiagnostics {
    pub final_stress: f64,
    /// Raw stress at the seeded start and after every Guttman update.
    pub stress_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Raw stress: Σ_{i<j} (‖x_i − x_j‖ − δ_ij)².
pub fn stress(coords: &[f64], targets: &[f64], n: usize) -> f64 {
    let d = pairwise_distances(coords, n, 2);
    let mut s = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let r = d[i * n + j] - targets[i * n + j];
            s += r * r;
        }
    }
    s
}

/// Metric MDS by SMACOF majorization from a seeded Gaussian start.
///
/// Stops once the relative stress decrease falls below `tol` or after
/// `max_iters` Guttman transforms.
pub fn smacof(z: &[f64], n: usize, p: usize, max_iters: usize, tol: f64, rng_seed: u64) -> (Vec<[f64; 2]>, MdsDiagnostics) {
    let delta = pairwise_distances(z, n, p);
    let mut rng = seed::rng_for(rng_seed, "smacof-init", 0);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut x: Vec<f64> = (0..2 * n).map(|_| normal.sample(&mut rng)).collect();

    let mut current = stress(&x, &delta, n);
    let mut history = vec![current];
    let mut converged = current == 0.0;
    let mut iterations = 0;
    let mut next = vec![0.0; 2 * n];

    while !converged && iterations < max_iters {
        let d = pairwise_distances(&x, n, 2);
        // Guttman transform: X⁺ = n⁻¹ B(X) X.
        for i in 0..n {
            let mut acc = [0.0; 2];
            let mut diag = 0.0;
            for j in 0..n {
                if i == j || d[i * n + j] == 0.0 {
                    continue;
                }
                let b = -delta[i * n + j] / d[i * n + j];
                diag -= b;
                acc[0] += b * x[2 * j];
                acc[1] += b * x[2 * j + 1];
            }
            next[2 * i] = (acc[0] + diag * x[2 * i]) / n as f64;
            next[2 * i + 1] = (acc[1] + diag * x[2 * i + 1]) / n as f64;
        }
        let updated = stress(&next, &delta, n);
        // Majorization cannot raise stress in exact arithmetic, so a rise is
        // rounding noise at a fixed point: keep the previous iterate and stop.
        if updated > current {
            converged = true;
            break;
        }
        std::mem::swap(&mut x, &mut next);
        iterations += 1;
        history.push(updated);
        converged = updated == 0.0 || current - updated <= tol * current;
        current = updated;
    }

    let coords = x.chunks(2).map(|c| [c[0], c[1]]).collect();
    (coords, MdsDiagnostics { final_stress: current, stress_history: history, iterations, converged })
}
