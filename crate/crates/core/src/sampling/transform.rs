use serde::{Deserialize, Serialize};

use crate::projection::FeatureMatrix;
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub name: String,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedStats {
    /// Retained columns, in output order.
    pub columns: Vec<ColumnStats>,
    pub dropped: Vec<String>,
}

/// Column transformation learned on a fit set and replayed on other rows.
///
/// Gender is already one-hot and missing lab cells already carry an
/// indicator column in `vec(P)`; any NaN that reaches this step is filled
/// with the fitted column median.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub standardize: bool,
    #[serde(default)]
    pub fitted_stats: Option<FittedStats>,
}

impl Default for TransformSpec {
    fn default() -> Self {
        TransformSpec { standardize: true, fitted_stats: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformMode {
    Fit,
    Apply,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformWarning {
    pub column: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TransformError {
    #[error("transform applied before it was fitted")]
    NotFitted,
    #[error("column {0:?} was fitted but is missing from the input")]
    MissingColumn(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transformed {
    pub matrix: FeatureMatrix,
    pub spec: TransformSpec,
    pub warnings: Vec<TransformWarning>,
}

pub fn transform_features(matrix: &FeatureMatrix, spec: &TransformSpec, mode: TransformMode) -> Result<Transformed, TransformError> {
    let mut warnings = Vec::new();
    let fitted = match mode {
        TransformMode::Fit => {
            let mut columns = Vec::new();
            let mut dropped = Vec::new();
            for (j, name) in matrix.feature_names.iter().enumerate() {
                let observed: Vec<f64> = matrix.column(j).into_iter().filter(|x| !x.is_nan()).collect();
                let median = stats::median(&observed).unwrap_or(0.0);
                let filled: Vec<f64> = matrix.column(j).into_iter().map(|x| if x.is_nan() { median } else { x }).collect();
                let mean = stats::mean(&filled);
                let std = stats::variance(&filled).sqrt();
                if std == 0.0 {
                    dropped.push(name.clone());
                    warnings.push(TransformWarning { column: name.clone(), message: "zero variance on fit set; column dropped".into() });
                } else {
                    columns.push(ColumnStats { name: name.clone(), mean, std, median });
                }
            }
            FittedStats { columns, dropped }
        }
        TransformMode::Apply => spec.fitted_stats.clone().ok_or(TransformError::NotFitted)?,
    };

    let idx: Vec<usize> = fitted
        .columns
        .iter()
        .map(|c| matrix.column_index(&c.name).ok_or_else(|| TransformError::MissingColumn(c.name.clone())))
        .collect::<Result<_, _>>()?;
    let mut data = Vec::with_capacity(matrix.n_rows() * idx.len());
    for row in matrix.rows() {
        for (c, &j) in fitted.columns.iter().zip(&idx) {
            let x = if row[j].is_nan() { c.median } else { row[j] };
            data.push(if spec.standardize { (x - c.mean) / c.std } else { x });
        }
    }
    let out = FeatureMatrix {
        ids: matrix.ids.clone(),
        feature_names: fitted.columns.iter().map(|c| c.name.clone()).collect(),
        data,
    };
    Ok(Transformed {
        matrix: out,
        spec: TransformSpec { standardize: spec.standardize, fitted_stats: Some(fitted) },
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[Vec<f64>]) -> FeatureMatrix {
        let ids = (0..rows.len()).map(|i| format!("p{i}")).collect();
        let names = (0..rows[0].len()).map(|j| format!("f{j}")).collect();
        FeatureMatrix::from_rows(ids, names, rows).unwrap()
    }

    #[test]
    fn fit_gives_unit_columns_and_drops_constants() {
        let x = m(&[vec![1.0, 5.0, 10.0], vec![2.0, 5.0, -3.0], vec![4.0, 5.0, 7.5], vec![8.0, 5.0, 0.0]]);
        let t = transform_features(&x, &TransformSpec::default(), TransformMode::Fit).unwrap();
        assert_eq!(t.matrix.feature_names, ["f0", "f2"]);
        assert_eq!(t.warnings.len(), 1);
        assert_eq!(t.warnings[0].column, "f1");
        for j in 0..2 {
            let col = t.matrix.column(j);
            assert!(stats::mean(&col).abs() < 1e-9);
            assert!((stats::variance(&col).sqrt() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn apply_before_fit_is_an_error() {
        let x = m(&[vec![1.0], vec![2.0]]);
        assert_eq!(transform_features(&x, &TransformSpec::default(), TransformMode::Apply), Err(TransformError::NotFitted));
    }

    #[test]
    fn fit_mean_row_maps_to_zero() {
        let x = m(&[vec![1.0, 2.0], vec![3.0, 6.0], vec![5.0, 1.0]]);
        let fitted = transform_features(&x, &TransformSpec::default(), TransformMode::Fit).unwrap().spec;
        let probe = m(&[vec![3.0, 3.0]]);
        let t = transform_features(&probe, &fitted, TransformMode::Apply).unwrap();
        assert!(t.matrix.data.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn nan_filled_with_fitted_median() {
        let x = m(&[vec![1.0], vec![f64::NAN], vec![7.0], vec![3.0]]);
        let t = transform_features(&x, &TransformSpec { standardize: false, fitted_stats: None }, TransformMode::Fit).unwrap();
        assert_eq!(t.matrix.data, vec![1.0, 3.0, 7.0, 3.0]);
    }
}
