use serde::{Deserialize, Serialize};

use super::SamplingError;
use crate::projection::FeatureMatrix;
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Smd {
    /// `None` when the pooled SD is 0 and the means differ.
    pub value: Option<f64>,
    pub mean_positive: f64,
    pub mean_negative: f64,
    pub pooled_sd: f64,
}

/// Standardized mean difference with pooled SD `sqrt((var_pos + var_neg) / 2)`
/// from population variances.
pub fn smd(positive: &[f64], negative: &[f64]) -> Smd {
    let (mp, mn) = (stats::mean(positive), stats::mean(negative));
    let pooled_sd = ((stats::variance(positive) + stats::variance(negative)) / 2.0).sqrt();
    let value = if pooled_sd > 0.0 {
        Some((mp - mn) / pooled_sd)
    } else if mp == mn {
        Some(0.0)
    } else {
        None
    };
    Smd { value, mean_positive: mp, mean_negative: mn, pooled_sd }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateBalance {
    pub covariate: String,
    pub before: Smd,
    pub after: Smd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub covariates: Vec<CovariateBalance>,
    /// Mean |SMD| over covariates with a defined SMD.
    pub mean_abs_smd_before: f64,
    pub mean_abs_smd_after: f64,
    pub undefined: Vec<String>,
}

/// Row groups of one covariate matrix.
pub struct Groups<'a> {
    pub positives: &'a [usize],
    pub negatives: &'a [usize],
}

fn mean_abs(values: impl Iterator<Item = Option<f64>>) -> f64 {
    let defined: Vec<f64> = values.flatten().map(f64::abs).collect();
    if defined.is_empty() {
        0.0
    } else {
        stats::mean(&defined)
    }
}

/// SMD per covariate column of `matrix`, comparing the `before` groups with
/// the `after` groups.
pub fn balance_from_matrix(matrix: &FeatureMatrix, before: Groups<'_>, after: Groups<'_>) -> Result<BalanceReport, SamplingError> {
    for (g, name) in [(before.positives, "positives before"), (before.negatives, "negatives before"), (after.positives, "positives"), (after.negatives, "negatives")] {
        if g.is_empty() {
            return Err(SamplingError::EmptyGroup(name.into()));
        }
    }
    let pick = |col: &[f64], rows: &[usize]| -> Vec<f64> { rows.iter().map(|&i| col[i]).collect() };
    let covariates: Vec<CovariateBalance> = matrix
        .feature_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let col = matrix.column(j);
            CovariateBalance {
                covariate: name.clone(),
                before: smd(&pick(&col, before.positives), &pick(&col, before.negatives)),
                after: smd(&pick(&col, after.positives), &pick(&col, after.negatives)),
            }
        })
        .collect();
    let undefined = covariates
        .iter()
        .filter(|c| c.before.value.is_none() || c.after.value.is_none())
        .map(|c| c.covariate.clone())
        .collect();
    Ok(BalanceReport {
        mean_abs_smd_before: mean_abs(covariates.iter().map(|c| c.before.value)),
        mean_abs_smd_after: mean_abs(covariates.iter().map(|c| c.after.value)),
        covariates,
        undefined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_groups_have_zero_smd() {
        let x = [1.0, 4.0, 2.5, 9.0];
        assert_eq!(smd(&x, &x).value, Some(0.0));
    }

    #[test]
    fn constant_covariate_conventions() {
        assert_eq!(smd(&[2.0, 2.0], &[2.0, 2.0, 2.0]).value, Some(0.0));
        assert_eq!(smd(&[2.0, 2.0], &[3.0]).value, None);
    }

    #[test]
    fn smd_by_definition() {
        let s = smd(&[0.0, 2.0], &[1.0, 5.0]);
        // var_pos = 1, var_neg = 4, pooled = sqrt(2.5)
        assert!((s.value.unwrap() - (1.0 - 3.0) / 2.5f64.sqrt()).abs() < 1e-15);
    }
}
