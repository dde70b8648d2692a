//! Positive extraction, negative sampling and covariate balance.
//!
//! Positives are patients with the sequela whose first hormone order
//! precedes onset. The negative pool is every patient in the selection
//! without the sequela. Three strategies draw negatives from that pool:
//! uniform `random`, `hard_negative` (highest seed-model scores) and `psm`
//! (propensity-score matching, which also trims unmatched positives).

mod balance;
pub mod psm;
mod transform;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use balance::{balance_from_matrix, smd, BalanceReport, CovariateBalance, Groups, Smd};
pub use psm::{LogisticFit, MatchedPair};
pub use transform::{transform_features, ColumnStats, FittedStats, TransformError, TransformMode, TransformSpec, TransformWarning, Transformed};

use crate::cohort::CohortSelection;
use crate::ehr::Corpus;
use crate::model::{train_forest, Dataset, ForestConfig, ModelError};
use crate::projection::{build_feature_matrix, FeatureMatrix, FeatureSchema, MatrixError};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingStrategy {
    Random,
    HardNegative,
    Psm,
    /// Hand-curated, e.g. from lasso selections.
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum StrategyParams {
    Random,
    HardNegative {
        seed_negatives: Vec<String>,
        seed_forest: ForestConfig,
    },
    Psm {
        covariates: Vec<String>,
        fit: LogisticFit,
        caliper: f64,
        pairs: Vec<MatchedPair>,
        unmatched_positives: Vec<String>,
    },
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    /// Sorted.
    pub positives: Vec<String>,
    /// Sorted.
    pub negatives: Vec<String>,
    pub feature_names: Vec<String>,
    pub strategy: SamplingStrategy,
    pub strategy_params: StrategyParams,
    pub rng_seed: u64,
}

impl SampleSet {
    /// A hand-curated set; ids are sorted and deduplicated.
    pub fn manual(positives: impl IntoIterator<Item = String>, negatives: impl IntoIterator<Item = String>, feature_names: Vec<String>) -> Self {
        let sorted = |ids: BTreeSet<String>| ids.into_iter().collect::<Vec<_>>();
        SampleSet {
            positives: sorted(positives.into_iter().collect()),
            negatives: sorted(negatives.into_iter().collect()),
            feature_names,
            strategy: SamplingStrategy::Manual,
            strategy_params: StrategyParams::Manual,
            rng_seed: 0,
        }
    }

    /// All ids in ascending order with their labels.
    pub fn labeled_ids(&self) -> (Vec<String>, Vec<bool>) {
        let mut all: Vec<(String, bool)> = self
            .positives
            .iter()
            .map(|p| (p.clone(), true))
            .chain(self.negatives.iter().map(|n| (n.clone(), false)))
            .collect();
        all.sort();
        all.into_iter().unzip()
    }

    pub fn validate(&self, corpus: &Corpus, schema: &FeatureSchema) -> Result<(), SamplingError> {
        let pos: BTreeSet<&String> = self.positives.iter().collect();
        if let Some(id) = self.negatives.iter().find(|n| pos.contains(n)) {
            return Err(SamplingError::Overlap(id.clone()));
        }
        if let Some(id) = self.positives.iter().chain(&self.negatives).find(|id| corpus.get(id).is_none()) {
            return Err(SamplingError::UnknownPatient(id.clone()));
        }
        check_features(&self.feature_names, schema)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SamplingError {
    #[error("requested {requested} negatives but only {available} are available")]
    InsufficientNegatives { requested: usize, available: usize },
    #[error("group {0} is empty")]
    EmptyGroup(String),
    #[error("logistic fit did not converge: gradient norm {gradient_norm:e} after {iterations} iterations")]
    ConvergenceError { iterations: usize, gradient_norm: f64 },
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("unknown patient {0:?}")]
    UnknownPatient(String),
    #[error("patient {0:?} is both positive and negative")]
    Overlap(String),
    #[error("feature list is empty")]
    NoFeatures,
    #[error("strategy {0:?} cannot draw negatives")]
    InvalidStrategy(SamplingStrategy),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl SamplingError {
    pub fn code(&self) -> &'static str {
        match self {
            SamplingError::InsufficientNegatives { .. } => "InsufficientNegatives",
            SamplingError::EmptyGroup(_) => "EmptyGroup",
            SamplingError::ConvergenceError { .. } => "ConvergenceError",
            SamplingError::UnknownFeature(_) => "UnknownFeature",
            SamplingError::UnknownPatient(_) => "UnknownPatient",
            SamplingError::Overlap(_) => "Overlap",
            SamplingError::NoFeatures => "NoFeatures",
            SamplingError::InvalidStrategy(_) => "InvalidStrategy",
            SamplingError::Transform(TransformError::NotFitted) => "NotFitted",
            SamplingError::Transform(_) => "TransformError",
            SamplingError::Model(e) => e.code(),
        }
    }
}

impl From<MatrixError> for SamplingError {
    fn from(e: MatrixError) -> Self {
        match e {
            MatrixError::UnknownFeature(f) => SamplingError::UnknownFeature(f),
            MatrixError::UnknownPatient(p) => SamplingError::UnknownPatient(p),
            MatrixError::Shape { expected, got } => SamplingError::Model(ModelError::Shape { expected, got }),
        }
    }
}

fn check_features(names: &[String], schema: &FeatureSchema) -> Result<(), SamplingError> {
    if names.is_empty() {
        return Err(SamplingError::NoFeatures);
    }
    match names.iter().find(|n| !schema.contains(n)) {
        Some(n) => Err(SamplingError::UnknownFeature(n.clone())),
        None => Ok(()),
    }
}

/// Selected patients with the sequela and at least one hormone order before
/// onset. Sorted.
pub fn extract_positives(corpus: &Corpus, selection: &CohortSelection) -> Vec<String> {
    selection
        .records(corpus)
        .filter(|r| {
            r.outcome.has_sequela
                && match (r.first_hormone_exposure(), r.outcome.onset_time) {
                    (Some(exposure), Some(onset)) => exposure < onset,
                    _ => false,
                }
        })
        .map(|r| r.patient_id.clone())
        .collect()
}

/// Selected patients without the sequela. Sorted.
pub fn negative_pool(corpus: &Corpus, selection: &CohortSelection) -> Vec<String> {
    selection.records(corpus).filter(|r| !r.outcome.has_sequela).map(|r| r.patient_id.clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingRequest {
    pub strategy: SamplingStrategy,
    /// Number of negatives; `None` means one per positive.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub rng_seed: u64,
    pub feature_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredNegative {
    pub patient_id: String,
    pub score: f64,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingOutcome {
    pub sample_set: SampleSet,
    /// Seed-model score of every pool negative (hard-negative strategy only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub negative_scores: Option<Vec<ScoredNegative>>,
}

/// Trees in the hard-negative seed classifier.
pub const SEED_FOREST_TREES: usize = 25;
pub const SEED_FOREST_DEPTH: usize = 6;

pub fn seed_forest_config(rng_seed: u64) -> ForestConfig {
    ForestConfig {
        n_trees: SEED_FOREST_TREES,
        max_depth: Some(SEED_FOREST_DEPTH),
        rng_seed: seed::sub_seed(rng_seed, 1),
        ..ForestConfig::default()
    }
}

/// Covariate matrix over `ids` restricted to `features`, with lab gaps imputed
/// over these same ids.
pub fn covariate_matrix<S: AsRef<str>>(corpus: &Corpus, schema: &FeatureSchema, ids: &[S], features: &[String]) -> Result<FeatureMatrix, SamplingError> {
    Ok(build_feature_matrix(corpus, ids, schema)?.select_columns(features)?)
}

pub fn sample_negatives(
    corpus: &Corpus,
    schema: &FeatureSchema,
    selection: &CohortSelection,
    positives: &[String],
    request: &SamplingRequest,
) -> Result<SamplingOutcome, SamplingError> {
    check_features(&request.feature_names, schema)?;
    let mut positives: Vec<String> = positives.to_vec();
    positives.sort();
    positives.dedup();
    if let Some(id) = positives.iter().find(|id| corpus.get(id).is_none()) {
        return Err(SamplingError::UnknownPatient(id.clone()));
    }
    let pos_set: BTreeSet<&String> = positives.iter().collect();
    let pool: Vec<String> = negative_pool(corpus, selection).into_iter().filter(|id| !pos_set.contains(id)).collect();
    let k = request.k.unwrap_or(positives.len());
    if k > pool.len() {
        return Err(SamplingError::InsufficientNegatives { requested: k, available: pool.len() });
    }
    let seed = request.rng_seed;
    let finish = |positives: Vec<String>, mut negatives: Vec<String>, params: StrategyParams| {
        negatives.sort();
        SampleSet {
            positives,
            negatives,
            feature_names: request.feature_names.clone(),
            strategy: request.strategy,
            strategy_params: params,
            rng_seed: seed,
        }
    };

    match request.strategy {
        SamplingStrategy::Manual => Err(SamplingError::InvalidStrategy(SamplingStrategy::Manual)),
        SamplingStrategy::Random => {
            let mut shuffled = pool;
            shuffled.shuffle(&mut seed::rng_for(seed, "random-negatives", 0));
            shuffled.truncate(k);
            Ok(SamplingOutcome { sample_set: finish(positives, shuffled, StrategyParams::Random), negative_scores: None })
        }
        SamplingStrategy::HardNegative => {
            if positives.is_empty() {
                return Err(SamplingError::EmptyGroup("positives".into()));
            }
            let (seed_negatives, config, scores) = hard_negative_scores(corpus, schema, &positives, &pool, &request.feature_names, seed)?;
            let mut ranked: Vec<(&String, f64)> = pool.iter().zip(scores.iter().copied()).collect();
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
            let chosen: BTreeSet<&String> = ranked.iter().take(k).map(|(id, _)| *id).collect();
            let negative_scores = pool
                .iter()
                .zip(&scores)
                .map(|(id, &score)| ScoredNegative { patient_id: id.clone(), score, selected: chosen.contains(id) })
                .collect();
            let negatives = chosen.into_iter().cloned().collect();
            Ok(SamplingOutcome {
                sample_set: finish(positives, negatives, StrategyParams::HardNegative { seed_negatives, seed_forest: config }),
                negative_scores: Some(negative_scores),
            })
        }
        SamplingStrategy::Psm => {
            if positives.is_empty() {
                return Err(SamplingError::EmptyGroup("positives".into()));
            }
            let ids: Vec<String> = positives.iter().chain(&pool).cloned().collect();
            let raw = covariate_matrix(corpus, schema, &ids, &request.feature_names)?;
            let z = transform_features(&raw, &TransformSpec::default(), TransformMode::Fit)?;
            let labels: Vec<bool> = (0..ids.len()).map(|i| i < positives.len()).collect();
            let d = z.matrix.n_cols();
            let fit = psm::fit_logistic(&z.matrix.data, ids.len(), d, &labels)?;
            let logits: Vec<f64> = z.matrix.rows().map(|r| fit.logit(r)).collect();
            let (pl, nl) = logits.split_at(positives.len());
            let caliper = psm::caliper(pl, nl);
            let tagged = |names: &[String], l: &[f64]| -> Vec<(String, f64)> { names.iter().cloned().zip(l.iter().copied()).collect() };
            let matching = psm::greedy_match(&tagged(&positives, pl), &tagged(&pool, nl), caliper, k);
            if matching.pairs.is_empty() {
                return Err(SamplingError::EmptyGroup("matched pairs".into()));
            }
            let mut matched_pos: Vec<String> = matching.pairs.iter().map(|p| p.positive.clone()).collect();
            matched_pos.sort();
            let negatives = matching.pairs.iter().map(|p| p.negative.clone()).collect();
            let params = StrategyParams::Psm {
                covariates: z.matrix.feature_names.clone(),
                fit,
                caliper: matching.caliper,
                pairs: matching.pairs,
                unmatched_positives: matching.unmatched_positives,
            };
            Ok(SamplingOutcome { sample_set: finish(matched_pos, negatives, params), negative_scores: None })
        }
    }
}

/// Stage one of hard-negative sampling: trains the seed classifier on the
/// positives against a random draw of `|positives|` pool negatives and
/// scores every pool negative with it. Scores follow `pool` order.
pub fn hard_negative_scores(
    corpus: &Corpus,
    schema: &FeatureSchema,
    positives: &[String],
    pool: &[String],
    features: &[String],
    rng_seed: u64,
) -> Result<(Vec<String>, ForestConfig, Vec<f64>), SamplingError> {
    let mut draw = pool.to_vec();
    draw.shuffle(&mut seed::rng_for(rng_seed, "hard-negative-seed-draw", 0));
    draw.truncate(positives.len().min(pool.len()));
    draw.sort();
    if draw.is_empty() {
        return Err(SamplingError::EmptyGroup("negative pool".into()));
    }

    let ids: Vec<String> = positives.iter().chain(pool).cloned().collect();
    let matrix = covariate_matrix(corpus, schema, &ids, features)?;
    let pool_rows: Vec<usize> = (positives.len()..ids.len()).collect();
    let draw_set: BTreeSet<&String> = draw.iter().collect();
    let train_rows: Vec<usize> = (0..positives.len())
        .chain(pool_rows.iter().copied().filter(|&i| draw_set.contains(&ids[i])))
        .collect();
    let train = Dataset::new(
        matrix.select_row_indices(&train_rows),
        train_rows.iter().map(|&i| i < positives.len()).collect(),
    )?;
    let config = seed_forest_config(rng_seed);
    let forest = train_forest(&train, &config)?;
    let scores = forest.predict_matrix(&matrix.select_row_indices(&pool_rows))?;
    Ok((draw, config, scores))
}

/// Balance of `covariates` before sampling (extracted positives against the
/// whole negative pool of `selection`) and after (the sample set's groups).
pub fn balance_report(
    corpus: &Corpus,
    schema: &FeatureSchema,
    selection: &CohortSelection,
    sample_set: &SampleSet,
    covariates: &[String],
) -> Result<BalanceReport, SamplingError> {
    check_features(covariates, schema)?;
    let before_pos = extract_positives(corpus, selection);
    let before_neg = negative_pool(corpus, selection);
    let ids: Vec<String> = before_pos
        .iter()
        .chain(&before_neg)
        .chain(&sample_set.positives)
        .chain(&sample_set.negatives)
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let matrix = covariate_matrix(corpus, schema, &ids, covariates)?;
    let rows = |group: &[String]| -> Vec<usize> { group.iter().map(|g| ids.binary_search(g).expect("id in union")).collect() };
    let (bp, bn, ap, an) = (rows(&before_pos), rows(&before_neg), rows(&sample_set.positives), rows(&sample_set.negatives));
    balance_from_matrix(&matrix, Groups { positives: &bp, negatives: &bn }, Groups { positives: &ap, negatives: &an })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ehr::Timestamp;
    use crate::synth::{generate_corpus, RiskSpec};

    fn corpus() -> Corpus {
        let spec = RiskSpec::null(11, 300, 0.2)
            .with_coefficient("cum_dose_medium", 2.0)
            .with_coefficient("confounder", 1.5);
        generate_corpus(&spec).unwrap().0
    }

    fn features() -> Vec<String> {
        ["age", "cum_dose_short", "cum_dose_medium", "cum_dose_long", "lab_crp_mean"].iter().map(|s| s.to_string()).collect()
    }

    fn request(strategy: SamplingStrategy, k: Option<usize>) -> SamplingRequest {
        SamplingRequest { strategy, k, rng_seed: 9, feature_names: features() }
    }

    #[test]
    fn positives_require_prior_exposure() {
        let c = corpus();
        let sel = CohortSelection::all(&c, Timestamp::from_secs(0));
        let pos = extract_positives(&c, &sel);
        for id in &pos {
            let r = c.get(id).unwrap();
            assert!(r.outcome.has_sequela);
            assert!(r.first_hormone_exposure().unwrap() < r.outcome.onset_time.unwrap());
        }
        let pool = negative_pool(&c, &sel);
        assert!(pos.iter().all(|p| !pool.contains(p)));
    }

    #[test]
    fn random_with_full_k_takes_whole_pool() {
        let c = corpus();
        let sel = CohortSelection::all(&c, Timestamp::from_secs(0));
        let pos = extract_positives(&c, &sel);
        let pool = negative_pool(&c, &sel);
        for s in 0..3 {
            let mut req = request(SamplingStrategy::Random, Some(pool.len()));
            req.rng_seed = s;
            let out = sample_negatives(&c, &FeatureSchema::standard(), &sel, &pos, &req).unwrap();
            assert_eq!(out.sample_set.negatives, pool);
        }
    }

    #[test]
    fn too_many_negatives_requested() {
        let c = corpus();
        let sel = CohortSelection::all(&c, Timestamp::from_secs(0));
        let pool = negative_pool(&c, &sel);
        let err = sample_negatives(&c, &FeatureSchema::standard(), &sel, &[], &request(SamplingStrategy::Random, Some(pool.len() + 1)));
        assert_eq!(err.unwrap_err(), SamplingError::InsufficientNegatives { requested: pool.len() + 1, available: pool.len() });
    }

    #[test]
    fn hard_negative_needs_positives() {
        let c = corpus();
        let sel = CohortSelection::all(&c, Timestamp::from_secs(0));
        let err = sample_negatives(&c, &FeatureSchema::standard(), &sel, &[], &request(SamplingStrategy::HardNegative, Some(3)));
        assert_eq!(err.unwrap_err(), SamplingError::EmptyGroup("positives".into()));
    }

    #[test]
    fn hard_negatives_dominate_rejected() {
        let c = corpus();
        let sel = CohortSelection::all(&c, Timestamp::from_secs(0));
        let pos = extract_positives(&c, &sel);
        let out = sample_negatives(&c, &FeatureSchema::standard(), &sel, &pos, &request(SamplingStrategy::HardNegative, None)).unwrap();
        let scores = out.negative_scores.unwrap();
        let min_sel = scores.iter().filter(|s| s.selected).map(|s| s.score).fold(f64::INFINITY, f64::min);
        let max_rej = scores.iter().filter(|s| !s.selected).map(|s| s.score).fold(f64::NEG_INFINITY, f64::max);
        assert!(min_sel >= max_rej);
        assert_eq!(out.sample_set.negatives.len(), pos.len());
    }

    #[test]
    fn psm_pairs_respect_caliper() {
        let c = corpus();
        let sel = CohortSelection::all(&c, Timestamp::from_secs(0));
        let pos = extract_positives(&c, &sel);
        let out = sample_negatives(&c, &FeatureSchema::standard(), &sel, &pos, &request(SamplingStrategy::Psm, None)).unwrap();
        let StrategyParams::Psm { pairs, caliper, unmatched_positives, .. } = &out.sample_set.strategy_params else {
            panic!("psm params expected");
        };
        assert!(pairs.iter().all(|p| p.logit_distance <= *caliper));
        assert_eq!(pairs.len() + unmatched_positives.len(), pos.len());
        assert_eq!(out.sample_set.positives.len(), out.sample_set.negatives.len());
    }

    #[test]
    fn every_strategy_is_disjoint_and_seeded() {
        let c = corpus();
        let schema = FeatureSchema::standard();
        let sel = CohortSelection::all(&c, Timestamp::from_secs(0));
        let pos = extract_positives(&c, &sel);
        for strategy in [SamplingStrategy::Random, SamplingStrategy::HardNegative, SamplingStrategy::Psm] {
            let a = sample_negatives(&c, &schema, &sel, &pos, &request(strategy, None)).unwrap();
            let b = sample_negatives(&c, &schema, &sel, &pos, &request(strategy, None)).unwrap();
            assert_eq!(a, b);
            a.sample_set.validate(&c, &schema).unwrap();
        }
    }
}
