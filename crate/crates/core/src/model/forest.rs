use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::tree::{bootstrap, grow_tree, GrowParams, TrainView, Tree};
use super::{Dataset, ModelError};
use crate::sampling::SampleSet;
use crate::seed;

fn default_trees() -> usize {
    100
}
fn default_min_leaf() -> usize {
    1
}
fn default_bootstrap() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ForestConfig {
    #[serde(default = "default_trees")]
    pub n_trees: usize,
    #[serde(default)]
    pub max_depth: Option<usize>,
    #[serde(default = "default_min_leaf")]
    pub min_samples_leaf: usize,
    /// `None` means ⌈√p⌉.
    #[serde(default)]
    pub features_per_split: Option<usize>,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: bool,
    #[serde(default)]
    pub rng_seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: default_trees(),
            max_depth: None,
            min_samples_leaf: default_min_leaf(),
            features_per_split: None,
            bootstrap: true,
            rng_seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn resolved_features_per_split(&self, p: usize) -> usize {
        self.features_per_split.unwrap_or_else(|| (p as f64).sqrt().ceil() as usize).max(1)
    }

    pub fn validate(&self, p: usize) -> Result<(), ModelError> {
        if self.n_trees == 0 {
            return Err(ModelError::InvalidConfig("n_trees >= 1".into()));
        }
        let k = self.resolved_features_per_split(p);
        if k > p {
            return Err(ModelError::InvalidConfig(format!("features_per_split {k} not in [1, {p}]")));
        }
        if self.max_depth == Some(0) {
            return Err(ModelError::InvalidConfig("max_depth >= 1".into()));
        }
        Ok(())
    }
}

/// Probability forest: every leaf stores the positive fraction of the
/// training rows reaching it, and the forest predicts the mean over trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub feature_names: Vec<String>,
    pub config: ForestConfig,
    pub training_fingerprint: String,
}

/// Hex SHA-256 over the canonical JSON of the sample set and config.
pub fn training_fingerprint(sample_set: &SampleSet, config: &ForestConfig) -> String {
    let mut h = Sha256::new();
    h.update(b"sample-set\0");
    h.update(serde_json::to_vec(sample_set).expect("sample set serializes"));
    h.update(b"\0forest-config\0");
    h.update(serde_json::to_vec(config).expect("config serializes"));
    hex::encode(h.finalize())
}

fn data_fingerprint(dataset: &Dataset, config: &ForestConfig) -> String {
    let mut h = Sha256::new();
    h.update(b"dataset\0");
    for name in &dataset.matrix.feature_names {
        h.update(name.as_bytes());
        h.update(b"\0");
    }
    for id in &dataset.matrix.ids {
        h.update(id.as_bytes());
        h.update(b"\0");
    }
    for x in &dataset.matrix.data {
        h.update(x.to_bits().to_le_bytes());
    }
    h.update(dataset.labels.iter().map(|&l| u8::from(l)).collect::<Vec<_>>());
    h.update(b"\0forest-config\0");
    h.update(serde_json::to_vec(config).expect("config serializes"));
    hex::encode(h.finalize())
}

pub fn train_forest(dataset: &Dataset, config: &ForestConfig) -> Result<Forest, ModelError> {
    let n = dataset.len();
    let p = dataset.matrix.n_cols();
    if n == 0 || p == 0 {
        return Err(ModelError::EmptyDataset);
    }
    if n < 2 || dataset.labels.iter().all(|&l| l) || dataset.labels.iter().all(|&l| !l) {
        return Err(ModelError::SingleClass);
    }
    config.validate(p)?;

    let view = TrainView { x: &dataset.matrix.data, p, labels: &dataset.labels };
    let params = GrowParams {
        max_depth: config.max_depth,
        min_samples_leaf: config.min_samples_leaf,
        features_per_split: config.resolved_features_per_split(p),
    };
    let trees: Vec<Tree> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed::rng_for(config.rng_seed, "forest-tree", t as u64);
            let sample = if config.bootstrap { bootstrap(n, &mut rng) } else { (0..n).collect() };
            grow_tree(&view, sample, &params, &mut rng)
        })
        .collect();

    let training_fingerprint = match &dataset.sample_set {
        Some(ss) => training_fingerprint(ss, config),
        None => data_fingerprint(dataset, config),
    };
    Ok(Forest { trees, feature_names: dataset.matrix.feature_names.clone(), config: config.clone(), training_fingerprint })
}

impl Forest {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    fn check_width(&self, row: &[f64]) -> Result<(), ModelError> {
        if row.len() != self.n_features() {
            return Err(ModelError::Shape { expected: self.n_features(), got: row.len() });
        }
        Ok(())
    }

    pub fn predict_one(&self, row: &[f64]) -> Result<f64, ModelError> {
        self.check_width(row)?;
        Ok(self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64)
    }

    pub fn predict_proba(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>, ModelError> {
        rows.iter().map(|r| self.predict_one(r)).collect()
    }

    pub fn predict_matrix(&self, m: &crate::projection::FeatureMatrix) -> Result<Vec<f64>, ModelError> {
        if m.n_cols() != self.n_features() {
            return Err(ModelError::Shape { expected: self.n_features(), got: m.n_cols() });
        }
        m.rows().map(|r| self.predict_one(r)).collect()
    }

    /// Mean of per-tree cover-weighted expectations.
    pub fn expected_value(&self) -> f64 {
        self.trees.iter().map(Tree::expected_value).sum::<f64>() / self.trees.len() as f64
    }
}
