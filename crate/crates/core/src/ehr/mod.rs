//! EHR data model for hormone-related corpora.
//!
//! Each [`AdmissionEpisode`] carries five event streams: primary/secondary
//! diagnoses, laboratory tests, examinations, medication orders and free-text
//! medical notes. A [`Corpus`] is immutable once parsed and validated.

mod summary;
mod time;
mod validate;
mod wire;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use summary::{corpus_summary, CorpusSummary, EventCounts, HormoneOrderCounts, TimeSpan};
pub use time::{Timestamp, SECONDS_PER_DAY};
pub use validate::{validate_record, DenyList, Violation};
pub use wire::{parse_corpus, serialize_corpus, CORPUS_SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Female,
    Male,
    Other,
}

impl Gender {
    pub const ALL: [Gender; 3] = [Gender::Female, Gender::Male, Gender::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Female => "female",
            Gender::Male => "male",
            Gender::Other => "other",
        }
    }
}

/// Glucocorticoid duration-of-action class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HormoneClass {
    ShortActing,
    MediumActing,
    LongActing,
    NonHormone,
}

impl HormoneClass {
    /// The three hormone classes, in display order.
    pub const HORMONES: [HormoneClass; 3] = [
        HormoneClass::ShortActing,
        HormoneClass::MediumActing,
        HormoneClass::LongActing,
    ];

    pub fn is_hormone(self) -> bool {
        !matches!(self, HormoneClass::NonHormone)
    }

    /// Position within [`HormoneClass::HORMONES`].
    pub fn hormone_index(self) -> Option<usize> {
        match self {
            HormoneClass::ShortActing => Some(0),
            HormoneClass::MediumActing => Some(1),
            HormoneClass::LongActing => Some(2),
            HormoneClass::NonHormone => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            HormoneClass::ShortActing => "short_acting",
            HormoneClass::MediumActing => "medium_acting",
            HormoneClass::LongActing => "long_acting",
            HormoneClass::NonHormone => "non_hormone",
        }
    }

    /// Short tag used in feature names (`cum_dose_short`, ...).
    pub fn short_tag(self) -> &'static str {
        match self {
            HormoneClass::ShortActing => "short",
            HormoneClass::MediumActing => "medium",
            HormoneClass::LongActing => "long",
            HormoneClass::NonHormone => "non_hormone",
        }
    }
}

impl fmt::Display for HormoneClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResultFlag {
    Normal,
    Abnormal,
    Unknown,
}

/// G1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub code: String,
    pub text: String,
    pub is_primary: bool,
}

impl Diagnosis {
    /// ICD three-character category (`M32.1` -> `M32`).
    pub fn code_prefix(&self) -> &str {
        let end = self
            .code
            .char_indices()
            .nth(3)
            .map(|(i, _)| i)
            .unwrap_or(self.code.len());
        &self.code[..end]
    }
}

/// G2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabTest {
    pub test_name: String,
    pub value: f64,
    pub unit: String,
    pub reference_low: Option<f64>,
    pub reference_high: Option<f64>,
    pub sample_time: Timestamp,
}

impl LabTest {
    /// Outside the reference range. Tests without bounds are never abnormal.
    pub fn is_abnormal(&self) -> bool {
        self.reference_low.is_some_and(|lo| self.value < lo)
            || self.reference_high.is_some_and(|hi| self.value > hi)
    }
}

/// G3, displayed as "Checks Information" in the event view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Examination {
    pub exam_name: String,
    pub result_flag: ResultFlag,
    pub report_text: String,
    pub exam_time: Timestamp,
}

/// G4. `dose` is prednisone-equivalent milligrams; `ordered_dose` is the
/// amount as written on the order, in milligrams of `drug_name`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedicationOrder {
    pub drug_name: String,
    pub hormone_class: HormoneClass,
    pub dose: f64,
    pub ordered_dose: f64,
    pub route: String,
    pub order_time: Timestamp,
}

/// G5, kept verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedicalNote {
    pub time: Timestamp,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissionEpisode {
    pub admit_time: Timestamp,
    pub discharge_time: Timestamp,
    pub diagnoses: Vec<Diagnosis>,
    pub lab_tests: Vec<LabTest>,
    pub examinations: Vec<Examination>,
    pub medication_orders: Vec<MedicationOrder>,
    pub medical_notes: Vec<MedicalNote>,
}

impl AdmissionEpisode {
    pub fn length_days(&self) -> f64 {
        self.admit_time.days_until(self.discharge_time)
    }

    pub fn primary_diagnosis(&self) -> Option<&Diagnosis> {
        self.diagnoses.iter().find(|d| d.is_primary)
    }

    pub fn contains(&self, t: Timestamp) -> bool {
        self.admit_time <= t && t <= self.discharge_time
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeLabel {
    pub has_sequela: bool,
    pub onset_time: Option<Timestamp>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    pub age: u32,
    pub gender: Gender,
    pub admissions: Vec<AdmissionEpisode>,
    pub outcome: OutcomeLabel,
}

impl PatientRecord {
    pub fn first_admit(&self) -> Option<Timestamp> {
        self.admissions.first().map(|a| a.admit_time)
    }

    pub fn last_discharge(&self) -> Option<Timestamp> {
        self.admissions.last().map(|a| a.discharge_time)
    }

    pub fn total_stay_days(&self) -> f64 {
        self.admissions.iter().map(AdmissionEpisode::length_days).sum()
    }

    pub fn orders(&self) -> impl Iterator<Item = &MedicationOrder> {
        self.admissions.iter().flat_map(|a| a.medication_orders.iter())
    }

    /// Prednisone-equivalent cumulative dose per hormone class, in
    /// [`HormoneClass::HORMONES`] order.
    pub fn cumulative_dose_by_class(&self) -> [f64; 3] {
        let mut out = [0.0; 3];
        for o in self.orders() {
            if let Some(i) = o.hormone_class.hormone_index() {
                out[i] += o.dose;
            }
        }
        out
    }

    pub fn cumulative_hormone_dose(&self) -> f64 {
        self.cumulative_dose_by_class().iter().sum()
    }

    pub fn has_hormone_order_in(&self, class: HormoneClass) -> bool {
        self.orders().any(|o| o.hormone_class == class)
    }

    pub fn first_hormone_exposure(&self) -> Option<Timestamp> {
        self.orders()
            .filter(|o| o.hormone_class.is_hormone())
            .map(|o| o.order_time)
            .min()
    }

    /// Distinct primary-diagnosis code prefixes across all admissions.
    pub fn primary_clusters(&self) -> std::collections::BTreeSet<String> {
        self.admissions
            .iter()
            .filter_map(|a| a.primary_diagnosis())
            .map(|d| d.code_prefix().to_string())
            .collect()
    }
}

/// Dictionary entry mapping a drug to its class and prednisone-equivalence
/// factor (prednisone-equivalent mg per mg of the drug).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrugInfo {
    pub class: HormoneClass,
    pub prednisone_factor: f64,
}

pub type DrugDictionary = BTreeMap<String, DrugInfo>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub schema_version: String,
    pub drug_dictionary: DrugDictionary,
    pub patients: BTreeMap<String, PatientRecord>,
}

impl Corpus {
    pub fn get(&self, id: &str) -> Option<&PatientRecord> {
        self.patients.get(id)
    }

    pub fn len(&self) -> usize {
        self.patients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patients.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &String> {
        self.patients.keys()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("invariant violated: {}", summarize(.violations))]
    Invariant { violations: Vec<Violation> },
}

fn summarize(violations: &[Violation]) -> String {
    const SHOWN: usize = 5;
    let mut parts: Vec<String> = violations.iter().take(SHOWN).map(|v| v.to_string()).collect();
    if violations.len() > SHOWN {
        parts.push(format!("... and {} more", violations.len() - SHOWN));
    }
    parts.join("; ")
}

impl CorpusError {
    pub fn violations(&self) -> &[Violation] {
        match self {
            CorpusError::Invariant { violations } => violations,
            CorpusError::Schema { .. } => &[],
        }
    }
}
