use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Dataset, Forest, ModelError};
use crate::seed;
use crate::stats;

pub const DEFAULT_TEST_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_positive: usize,
    pub false_positive: usize,
    pub true_negative: usize,
    pub false_negative: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.true_positive + self.false_positive + self.true_negative + self.false_negative
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `None` when the test split holds a single class.
    pub auc: Option<f64>,
    pub accuracy: f64,
    pub f1: f64,
    pub confusion: Confusion,
    pub n_test: usize,
    pub split_seed: u64,
    pub split_fraction: f64,
}

/// Stratified train/test split. Each class sends `round(fraction · n_c)`
/// rows to test, keeping at least one row on each side when the class has
/// two or more. Returned indices are ascending.
pub fn stratified_split(labels: &[bool], test_fraction: f64, split_seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (stream, class) in [(0u64, false), (1u64, true)] {
        let mut idx: Vec<usize> = labels.iter().enumerate().filter(|(_, &l)| l == class).map(|(i, _)| i).collect();
        let mut rng = seed::rng_for(split_seed, "stratified-split", stream);
        idx.shuffle(&mut rng);
        let n = idx.len();
        let mut k = (test_fraction * n as f64).round() as usize;
        if n >= 2 {
            k = k.clamp(1, n - 1);
        } else {
            k = 0;
        }
        test.extend_from_slice(&idx[..k]);
        train.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

pub fn evaluate_scores(scores: &[f64], labels: &[bool], split_seed: u64, split_fraction: f64) -> EvalReport {
    let mut c = Confusion { true_positive: 0, false_positive: 0, true_negative: 0, false_negative: 0 };
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= 0.5, l) {
            (true, true) => c.true_positive += 1,
            (true, false) => c.false_positive += 1,
            (false, false) => c.true_negative += 1,
            (false, true) => c.false_negative += 1,
        }
    }
    let n = labels.len();
    let f1_den = 2 * c.true_positive + c.false_positive + c.false_negative;
    EvalReport {
        auc: stats::auc(scores, labels),
        accuracy: if n == 0 { 0.0 } else { (c.true_positive + c.true_negative) as f64 / n as f64 },
        f1: if f1_den == 0 { 0.0 } else { 2.0 * c.true_positive as f64 / f1_den as f64 },
        confusion: c,
        n_test: n,
        split_seed,
        split_fraction,
    }
}

pub fn evaluate(forest: &Forest, test: &Dataset, split_seed: u64, split_fraction: f64) -> Result<EvalReport, ModelError> {
    if test.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let scores = forest.predict_matrix(&test.matrix)?;
    Ok(evaluate_scores(&scores, &test.labels, split_seed, split_fraction))
}
