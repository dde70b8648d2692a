//! Data products for the Modeling View.

use serde::{Deserialize, Serialize};

use super::{EvalReport, ShapMatrix};
use crate::projection::{pca, standardize, FeatureMatrix};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassTag {
    Positive,
    Negative,
}

impl ClassTag {
    pub fn of(label: bool) -> Self {
        if label {
            ClassTag::Positive
        } else {
            ClassTag::Negative
        }
    }

    /// Dot color contract: positives green, negatives yellow.
    pub fn color(self) -> &'static str {
        match self {
            ClassTag::Positive => "green",
            ClassTag::Negative => "yellow",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub patient_id: String,
    pub x: f64,
    pub y: f64,
    pub tag: ClassTag,
    pub color: String,
    pub in_test: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub n: usize,
}

impl BoxStats {
    pub fn from_values(values: &[f64]) -> Option<BoxStats> {
        let s = stats::sorted(values);
        Some(BoxStats {
            min: *s.first()?,
            q1: stats::quantile_sorted(&s, 0.25)?,
            median: stats::quantile_sorted(&s, 0.5)?,
            q3: stats::quantile_sorted(&s, 0.75)?,
            max: *s.last()?,
            n: s.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBoxStats {
    pub feature: String,
    pub positive: Option<BoxStats>,
    pub negative: Option<BoxStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelLine {
    pub patient_id: String,
    pub tag: ClassTag,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelCoordinates {
    pub axes: Vec<String>,
    pub lines: Vec<ParallelLine>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeeswarmPoint {
    pub feature: String,
    pub patient_id: String,
    pub phi: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelingView {
    pub round_id: u64,
    pub feature_names: Vec<String>,
    pub eval: Option<EvalReport>,
    pub base_value: f64,
    pub scatter: Vec<ScatterPoint>,
    pub box_stats: Vec<FeatureBoxStats>,
    pub parallel_coordinates: ParallelCoordinates,
    pub beeswarm: Vec<BeeswarmPoint>,
}

/// Assembles the view from the sample matrix (raw feature values, one row per
/// sampled patient), the indices of the held-out rows, and the SHAP values of
/// those rows in the same order.
pub fn modeling_view_data(
    round_id: u64,
    sample: &FeatureMatrix,
    labels: &[bool],
    test_rows: &[usize],
    shap: &ShapMatrix,
    eval: Option<EvalReport>,
) -> ModelingView {
    let p = sample.n_cols();
    let n = sample.n_rows();
    let in_test: Vec<bool> = {
        let mut v = vec![false; n];
        test_rows.iter().for_each(|&i| v[i] = true);
        v
    };

    let coords = if n >= 2 && p >= 1 { pca(&standardize(sample), n, p).0 } else { vec![[0.0, 0.0]; n] };
    let scatter = (0..n)
        .map(|i| {
            let tag = ClassTag::of(labels[i]);
            ScatterPoint {
                patient_id: sample.ids[i].clone(),
                x: coords[i][0],
                y: coords[i][1],
                tag,
                color: tag.color().into(),
                in_test: in_test[i],
            }
        })
        .collect();

    let box_stats = (0..p)
        .map(|j| {
            let col = sample.column(j);
            let pick = |class: bool| -> Vec<f64> { col.iter().zip(labels).filter(|(_, &l)| l == class).map(|(v, _)| *v).collect() };
            FeatureBoxStats {
                feature: sample.feature_names[j].clone(),
                positive: BoxStats::from_values(&pick(true)),
                negative: BoxStats::from_values(&pick(false)),
            }
        })
        .collect();

    let lines = test_rows
        .iter()
        .map(|&i| ParallelLine { patient_id: sample.ids[i].clone(), tag: ClassTag::of(labels[i]), values: sample.row(i).to_vec() })
        .collect();

    let mut beeswarm = Vec::with_capacity(test_rows.len() * shap.feature_names.len());
    for (k, &i) in test_rows.iter().enumerate() {
        for (j, name) in shap.feature_names.iter().enumerate() {
            let col = sample.column_index(name).expect("SHAP features are sample columns");
            beeswarm.push(BeeswarmPoint {
                feature: name.clone(),
                patient_id: sample.ids[i].clone(),
                phi: shap.values[k][j],
                value: sample.get(i, col),
            });
        }
    }

    ModelingView {
        round_id,
        feature_names: shap.feature_names.clone(),
        eval,
        base_value: shap.base_value,
        scatter,
        box_stats,
        parallel_coordinates: ParallelCoordinates { axes: sample.feature_names.clone(), lines },
        beeswarm,
    }
}
