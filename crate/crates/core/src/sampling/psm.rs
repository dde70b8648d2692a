use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::SamplingError;
use crate::stats;

pub const MAX_ITERS: usize = 5000;
pub const GRADIENT_TOL: f64 = 1e-8;
/// L2 penalty on slopes (not the intercept); keeps the fit finite under
/// complete separation.
pub const RIDGE: f64 = 1e-4;
pub const CALIPER_SD: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
}

impl LogisticFit {
    pub fn logit(&self, row: &[f64]) -> f64 {
        self.intercept + row.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum::<f64>()
    }
}

fn objective(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    let n = y.len() as f64;
    let ll: f64 = eta
        .iter()
        .zip(y.iter())
        .map(|(&e, &t)| {
            // log σ(e) = -softplus(-e), log(1-σ(e)) = -softplus(e)
            let softplus = |z: f64| if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
            -(t * softplus(-e) + (1.0 - t) * softplus(e))
        })
        .sum();
    ll / n - 0.5 * RIDGE * beta.rows(1, beta.len() - 1).norm_squared()
}

/// Maximizes the ridge-penalized mean log-likelihood with damped Newton
/// steps and Armijo backtracking. `x` is row-major `n × d` without the
/// intercept column.
pub fn fit_logistic(x: &[f64], n: usize, d: usize, y: &[bool]) -> Result<LogisticFit, SamplingError> {
    let mut design = DMatrix::from_element(n, d + 1, 1.0);
    for i in 0..n {
        for j in 0..d {
            design[(i, j + 1)] = x[i * d + j];
        }
    }
    let yv = DVector::from_iterator(n, y.iter().map(|&b| if b { 1.0 } else { 0.0 }));
    let mut penalty = DMatrix::<f64>::identity(d + 1, d + 1) * RIDGE;
    penalty[(0, 0)] = 0.0;
    let mut beta = DVector::zeros(d + 1);
    let nf = n as f64;

    for iter in 0..MAX_ITERS {
        let mu = (&design * &beta).map(stats::logistic);
        let grad = design.transpose() * (&yv - &mu) / nf - &penalty * &beta;
        let gnorm = grad.norm();
        if gnorm <= GRADIENT_TOL {
            return Ok(LogisticFit { intercept: beta[0], coefficients: beta.iter().skip(1).copied().collect(), iterations: iter, gradient_norm: gnorm });
        }
        let w = mu.map(|m| m * (1.0 - m));
        let weighted = DMatrix::from_fn(n, d + 1, |i, j| design[(i, j)] * w[i]);
        let mut info = &penalty + design.transpose() * weighted / nf;
        for k in 0..=d {
            info[(k, k)] += 1e-12;
        }
        let step = match info.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => grad.clone(),
        };
        let f0 = objective(&design, &yv, &beta);
        let slope = grad.dot(&step);
        let mut t = 1.0;
        loop {
            let cand = &beta + &step * t;
            if objective(&design, &yv, &cand) >= f0 + 1e-4 * t * slope || t < 1e-10 {
                beta = cand;
                break;
            }
            t *= 0.5;
        }
    }
    let mu = (&design * &beta).map(stats::logistic);
    let grad = design.transpose() * (&yv - &mu) / nf - &penalty * &beta;
    let gnorm = grad.norm();
    if gnorm <= GRADIENT_TOL {
        Ok(LogisticFit { intercept: beta[0], coefficients: beta.iter().skip(1).copied().collect(), iterations: MAX_ITERS, gradient_norm: gnorm })
    } else {
        Err(SamplingError::ConvergenceError { iterations: MAX_ITERS, gradient_norm: gnorm })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub positive: String,
    pub negative: String,
    pub logit_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    pub pairs: Vec<MatchedPair>,
    pub unmatched_positives: Vec<String>,
    pub caliper: f64,
}

/// Greedy 1:1 nearest-neighbour matching on the logit without replacement.
/// Positives are visited by descending logit (ties by id); each takes the
/// closest unused negative (ties by id) if it lies within the caliper.
pub fn greedy_match(positives: &[(String, f64)], negatives: &[(String, f64)], caliper: f64, max_pairs: usize) -> Matching {
    let mut order: Vec<&(String, f64)> = positives.iter().collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut used = vec![false; negatives.len()];
    let mut pairs = Vec::new();
    let mut unmatched = Vec::new();
    for (pid, pl) in order {
        if pairs.len() == max_pairs {
            unmatched.push(pid.clone());
            continue;
        }
        let best = negatives
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .map(|(k, (nid, nl))| (k, nid, (pl - nl).abs()))
            .min_by(|a, b| a.2.total_cmp(&b.2).then(a.1.cmp(b.1)));
        match best {
            Some((k, nid, dist)) if dist <= caliper => {
                used[k] = true;
                pairs.push(MatchedPair { positive: pid.clone(), negative: nid.clone(), logit_distance: dist });
            }
            _ => unmatched.push(pid.clone()),
        }
    }
    unmatched.sort();
    Matching { pairs, unmatched_positives: unmatched, caliper }
}

/// Austin's caliper: 0.2 × pooled SD of the logit.
pub fn caliper(pos_logits: &[f64], neg_logits: &[f64]) -> f64 {
    CALIPER_SD * ((stats::variance(pos_logits) + stats::variance(neg_logits)) / 2.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_planted_logistic_model() {
        use rand::RngExt;
        let mut rng = crate::seed::rng(4);
        let n = 4000;
        let x: Vec<f64> = (0..n * 2).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let y: Vec<bool> = (0..n)
            .map(|i| rng.random::<f64>() < stats::logistic(-0.5 + 1.5 * x[2 * i] - 1.0 * x[2 * i + 1]))
            .collect();
        let fit = fit_logistic(&x, n, 2, &y).unwrap();
        assert!(fit.gradient_norm <= GRADIENT_TOL);
        assert!((fit.intercept + 0.5).abs() < 0.2, "{fit:?}");
        assert!((fit.coefficients[0] - 1.5).abs() < 0.3, "{fit:?}");
        assert!((fit.coefficients[1] + 1.0).abs() < 0.3, "{fit:?}");
    }

    #[test]
    fn separable_data_still_converges() {
        let x = vec![-2.0, -1.0, 1.0, 2.0];
        let fit = fit_logistic(&x, 4, 1, &[false, false, true, true]).unwrap();
        assert!(fit.coefficients[0] > 0.0);
    }

    #[test]
    fn matching_respects_caliper_and_is_one_to_one() {
        let pos = vec![("a".to_string(), 2.0), ("b".to_string(), 0.0), ("c".to_string(), 5.0)];
        let neg = vec![("x".to_string(), 1.9), ("y".to_string(), 0.05), ("z".to_string(), 2.05)];
        let m = greedy_match(&pos, &neg, 0.2, usize::MAX);
        assert_eq!(m.unmatched_positives, ["c"]);
        assert_eq!(m.pairs.len(), 2);
        assert_eq!((m.pairs[0].positive.as_str(), m.pairs[0].negative.as_str()), ("a", "z"));
        assert!(m.pairs.iter().all(|p| p.logit_distance <= 0.2));
    }
}
