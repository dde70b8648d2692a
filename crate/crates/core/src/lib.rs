//! Engines for a two-phase, human-in-the-loop analysis of hormone-related
//! EHR cohorts.
//!
//! Phase I (retrospective exploration): [`ehr`] ingestion and summary,
//! [`cohort`] filters and linked channels, [`projection`] layouts and glyphs,
//! [`timeline`] per-patient event lanes.
//!
//! Phase II (iterative modeling): [`sampling`] of positive/negative sets,
//! [`model`] random forests with exact tree Shapley values, [`pipeline`] to
//! run one modeling round and [`logstore`] to keep every round replayable.
//!
//! [`synth`] generates corpora with planted risk structure for testing.

pub mod cohort;
pub mod ehr;
pub mod logstore;
pub mod model;
pub mod pipeline;
pub mod projection;
pub mod sampling;
pub mod seed;
pub mod stats;
pub mod synth;
pub mod timeline;

pub use ehr::{
    corpus_summary, parse_corpus, serialize_corpus, validate_record, Corpus, CorpusError,
    CorpusSummary, Gender, HormoneClass, PatientRecord, Timestamp,
};
pub use model::{EvalReport, Forest, ForestConfig, ShapMatrix};
pub use projection::{FeatureMatrix, FeatureSchema, Layout, ProjectionConfig, ProjectionMethod};
pub use sampling::{SampleSet, SamplingStrategy};
