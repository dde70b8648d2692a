//! Random-forest training, evaluation and exact tree Shapley values.

mod forest;
pub mod metrics;
pub mod shap;
pub mod tree;
pub mod view;

pub use forest::{train_forest, training_fingerprint, Forest, ForestConfig};
pub use metrics::{evaluate, evaluate_scores, stratified_split, Confusion, EvalReport, DEFAULT_TEST_FRACTION};
pub use shap::{shap_brute_force, shap_values, tree_shap, ShapMatrix, BRUTE_FORCE_MAX_FEATURES, SHAP_VARIANT};
pub use tree::{Node, NodeKind, Tree};
pub use view::{modeling_view_data, BeeswarmPoint, BoxStats, ClassTag, FeatureBoxStats, ModelingView, ParallelCoordinates, ScatterPoint};

use crate::projection::FeatureMatrix;
use crate::sampling::SampleSet;

/// Feature matrix plus binary labels. `sample_set` is the provenance used
/// for the training fingerprint when present.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub matrix: FeatureMatrix,
    pub labels: Vec<bool>,
    pub sample_set: Option<SampleSet>,
}

impl Dataset {
    pub fn new(matrix: FeatureMatrix, labels: Vec<bool>) -> Result<Self, ModelError> {
        if matrix.n_rows() != labels.len() {
            return Err(ModelError::Shape { expected: matrix.n_rows(), got: labels.len() });
        }
        Ok(Dataset { matrix, labels, sample_set: None })
    }

    pub fn with_sample_set(mut self, sample_set: SampleSet) -> Self {
        self.sample_set = Some(sample_set);
        self
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            matrix: self.matrix.select_row_indices(rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            sample_set: self.sample_set.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("dataset has no rows or no features")]
    EmptyDataset,
    #[error("training data needs at least two samples and both classes")]
    SingleClass,
    #[error("invalid forest config: {0}")]
    InvalidConfig(String),
    #[error("instance width {got} does not match {expected} features")]
    Shape { expected: usize, got: usize },
    #[error("brute-force Shapley supports at most {max} features, got {got}")]
    TooManyFeatures { got: usize, max: usize },
}

impl ModelError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            ModelError::EmptyDataset => "EmptyDataset",
            ModelError::SingleClass => "SingleClassError",
            ModelError::InvalidConfig(_) => "InvalidConfig",
            ModelError::Shape { .. } => "ShapeError",
            ModelError::TooManyFeatures { .. } => "TooManyFeatures",
        }
    }
}
