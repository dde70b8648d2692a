//! One modeling round: sample set → dataset → stratified split → transform →
//! forest → evaluation → Shapley values, plus replay from a stored round.

use serde::{Deserialize, Serialize};

use crate::ehr::{Corpus, Timestamp};
use crate::logstore::{FeatureImportance, ModelRound, RoundStatus};
use crate::model::{
    evaluate, modeling_view_data, shap_values, stratified_split, train_forest, training_fingerprint, Dataset, Forest, ForestConfig,
    ModelError, ModelingView, ShapMatrix, DEFAULT_TEST_FRACTION,
};
use crate::projection::{FeatureMatrix, FeatureSchema};
use crate::sampling::{covariate_matrix, transform_features, SampleSet, SamplingError, TransformMode, TransformSpec};

fn default_test_fraction() -> f64 {
    DEFAULT_TEST_FRACTION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRequest {
    #[serde(default)]
    pub forest: ForestConfig,
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
}

impl Default for TrainRequest {
    fn default() -> Self {
        TrainRequest { forest: ForestConfig::default(), split_seed: 0, test_fraction: DEFAULT_TEST_FRACTION }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("test_fraction must lie in (0, 1), got {0}")]
    InvalidSplit(f64),
    #[error("round {0} failed and has nothing to replay")]
    NotReplayable(u64),
}

impl PipelineError {
    pub fn code(&self) -> &'static str {
        match self {
            PipelineError::Sampling(e) => e.code(),
            PipelineError::Model(e) => e.code(),
            PipelineError::InvalidSplit(_) => "InvalidSplit",
            PipelineError::NotReplayable(_) => "NotReplayable",
        }
    }
}

/// Everything a completed round produced. Only [`RoundArtifacts::round`] is
/// persisted; the rest is recomputed by [`replay`].
#[derive(Debug, Clone, PartialEq)]
pub struct RoundArtifacts {
    pub round: ModelRound,
    pub forest: Forest,
    pub transform: TransformSpec,
    /// Raw feature values of every sampled patient, ids ascending.
    pub sample_matrix: FeatureMatrix,
    pub labels: Vec<bool>,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub test_scores: Vec<f64>,
    /// One row per entry of `test_rows`.
    pub shap: ShapMatrix,
}

impl RoundArtifacts {
    pub fn view(&self) -> ModelingView {
        modeling_view_data(self.round.round_id, &self.sample_matrix, &self.labels, &self.test_rows, &self.shap, self.round.eval.clone())
    }
}

/// Raw covariates and labels of a sample set, rows in ascending id order.
pub fn build_dataset(corpus: &Corpus, schema: &FeatureSchema, sample_set: &SampleSet) -> Result<(FeatureMatrix, Vec<bool>), PipelineError> {
    sample_set.validate(corpus, schema)?;
    let (ids, labels) = sample_set.labeled_ids();
    let matrix = covariate_matrix(corpus, schema, &ids, &sample_set.feature_names)?;
    Ok((matrix, labels))
}

fn importance(shap: &ShapMatrix) -> Vec<FeatureImportance> {
    let mut out: Vec<FeatureImportance> = shap
        .feature_names
        .iter()
        .zip(shap.mean_abs())
        .map(|(f, v)| FeatureImportance { feature: f.clone(), mean_abs_shap: v })
        .collect();
    out.sort_by(|a, b| b.mean_abs_shap.total_cmp(&a.mean_abs_shap).then(a.feature.cmp(&b.feature)));
    out
}

pub fn run_round(
    corpus: &Corpus,
    schema: &FeatureSchema,
    sample_set: &SampleSet,
    request: &TrainRequest,
    created_at: Timestamp,
) -> Result<RoundArtifacts, PipelineError> {
    if !(request.test_fraction > 0.0 && request.test_fraction < 1.0) {
        return Err(PipelineError::InvalidSplit(request.test_fraction));
    }
    let (sample_matrix, labels) = build_dataset(corpus, schema, sample_set)?;
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(ModelError::SingleClass.into());
    }
    let (train_rows, test_rows) = stratified_split(&labels, request.test_fraction, request.split_seed);

    let fitted = transform_features(&sample_matrix.select_row_indices(&train_rows), &TransformSpec::default(), TransformMode::Fit)
        .map_err(SamplingError::from)?;
    let test_raw = sample_matrix.select_row_indices(&test_rows);
    let test_x = transform_features(&test_raw, &fitted.spec, TransformMode::Apply).map_err(SamplingError::from)?.matrix;

    let pick = |rows: &[usize]| rows.iter().map(|&i| labels[i]).collect::<Vec<_>>();
    let train = Dataset::new(fitted.matrix, pick(&train_rows))?.with_sample_set(sample_set.clone());
    let test = Dataset::new(test_x, pick(&test_rows))?;

    let forest = train_forest(&train, &request.forest)?;
    let eval = evaluate(&forest, &test, request.split_seed, request.test_fraction)?;
    let test_instances: Vec<Vec<f64>> = test.matrix.rows().map(<[f64]>::to_vec).collect();
    let test_scores = forest.predict_proba(&test_instances)?;
    let shap = shap_values(&forest, &test_instances)?;

    let round = ModelRound {
        round_id: 0,
        created_at,
        sample_set: sample_set.clone(),
        forest_config: request.forest.clone(),
        split_seed: request.split_seed,
        test_fraction: request.test_fraction,
        training_fingerprint: forest.training_fingerprint.clone(),
        status: RoundStatus::Complete,
        eval: Some(eval),
        shap_summary: Some(importance(&shap)),
        transform_warnings: fitted.warnings,
    };
    Ok(RoundArtifacts { round, forest, transform: fitted.spec, sample_matrix, labels, train_rows, test_rows, test_scores, shap })
}

/// Log entry for a round whose training failed.
pub fn failed_round(sample_set: &SampleSet, request: &TrainRequest, created_at: Timestamp, error: &PipelineError) -> ModelRound {
    ModelRound {
        round_id: 0,
        created_at,
        sample_set: sample_set.clone(),
        forest_config: request.forest.clone(),
        split_seed: request.split_seed,
        test_fraction: request.test_fraction,
        training_fingerprint: training_fingerprint(sample_set, &request.forest),
        status: RoundStatus::Failed { code: error.code().into(), reason: error.to_string() },
        eval: None,
        shap_summary: None,
        transform_warnings: vec![],
    }
}

/// Retrains from the snapshot in `round`. The returned artifacts carry the
/// stored round id and timestamp.
pub fn replay(corpus: &Corpus, schema: &FeatureSchema, round: &ModelRound) -> Result<RoundArtifacts, PipelineError> {
    if round.status != RoundStatus::Complete {
        return Err(PipelineError::NotReplayable(round.round_id));
    }
    let request = TrainRequest { forest: round.forest_config.clone(), split_seed: round.split_seed, test_fraction: round.test_fraction };
    let mut artifacts = run_round(corpus, schema, &round.sample_set, &request, round.created_at)?;
    artifacts.round.round_id = round.round_id;
    Ok(artifacts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::CohortSelection;
    use crate::sampling::{extract_positives, sample_negatives, SamplingRequest, SamplingStrategy};
    use crate::synth::{generate_corpus, RiskSpec};

    fn setup() -> (Corpus, SampleSet) {
        let spec = RiskSpec::null(5, 400, 0.15).with_coefficient("cum_dose_long", 2.5).with_coefficient("age", 1.5);
        let corpus = generate_corpus(&spec).unwrap().0;
        let sel = CohortSelection::all(&corpus, Timestamp::from_secs(0));
        let pos = extract_positives(&corpus, &sel);
        let req = SamplingRequest {
            strategy: SamplingStrategy::Random,
            k: None,
            rng_seed: 2,
            feature_names: FeatureSchema::standard().names,
        };
        let ss = sample_negatives(&corpus, &FeatureSchema::standard(), &sel, &pos, &req).unwrap().sample_set;
        (corpus, ss)
    }

    #[test]
    fn round_replays_exactly() {
        let (corpus, ss) = setup();
        let schema = FeatureSchema::standard();
        let req = TrainRequest { forest: ForestConfig { n_trees: 20, ..Default::default() }.with_seed(4), split_seed: 8, test_fraction: 0.2 };
        let a = run_round(&corpus, &schema, &ss, &req, Timestamp::from_secs(10)).unwrap();
        let b = replay(&corpus, &schema, &a.round).unwrap();
        assert_eq!(a.round, b.round);
        assert_eq!(a.shap, b.shap);
        let view = a.view();
        assert_eq!(view.beeswarm.len(), a.test_rows.len() * a.shap.feature_names.len());
        // constant columns (e.g. gender_other) are dropped and reported
        assert_eq!(a.shap.feature_names.len() + a.round.transform_warnings.len(), schema.len());
    }

    #[test]
    fn single_class_sample_fails() {
        let (corpus, mut ss) = setup();
        ss.positives.clear();
        let err = run_round(&corpus, &FeatureSchema::standard(), &ss, &TrainRequest::default(), Timestamp::from_secs(0)).unwrap_err();
        assert_eq!(err.code(), "SingleClassError");
        let failed = failed_round(&ss, &TrainRequest::default(), Timestamp::from_secs(0), &err);
        assert!(failed.eval.is_none());
        assert!(matches!(replay(&corpus, &FeatureSchema::standard(), &failed), Err(PipelineError::NotReplayable(_))));
    }
}
