//! Synthetic corpus generator with a planted logistic risk model.
//!
//! Every patient draws from its own generator seeded by `(seed, index)`, and
//! the outcome comparison uses a separate per-patient stream, so changing a
//! coefficient moves only the Bernoulli threshold and leaves every other draw
//! untouched.
//!
//! Risk features are non-negative by construction: cumulative
//! prednisone-equivalent dose per hormone class in grams, age as
//! `(age - 18) / 40`, and a latent disease-activity confounder in `[0, 1]`
//! that also raises hormone exposure and CRP levels. `base_rate` is therefore
//! the risk of an unexposed 18-year-old with no disease activity. Setting
//! `target_prevalence` instead solves for the intercept that makes the mean
//! planted risk equal the target; the labels are then drawn as usual.

use std::collections::BTreeMap;

use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ehr::{
    AdmissionEpisode, Corpus, Diagnosis, DrugDictionary, DrugInfo, Examination, Gender,
    HormoneClass, LabTest, MedicalNote, MedicationOrder, OutcomeLabel, PatientRecord, ResultFlag,
    Timestamp, CORPUS_SCHEMA_VERSION,
};
use crate::seed;
use crate::stats;

pub const RISK_FEATURES: [&str; 5] = ["cum_dose_short", "cum_dose_medium", "cum_dose_long", "age", "confounder"];

/// Lab panel every synthetic admission may carry.
pub const CANONICAL_LABS: [&str; 3] = ["crp", "alp", "triglycerides"];
pub const CANONICAL_EXAMS: [&str; 3] = ["hip_mri", "hip_xray", "bone_density"];

/// Primary-disease catalog: ICD category → (code, text) variants.
const DISEASES: [(&str, &[(&str, &str)]); 3] = [
    ("M32", &[("M32.1", "systemic lupus erythematosus with organ involvement"), ("M32.9", "systemic lupus erythematosus")]),
    ("M05", &[("M05.7", "seropositive rheumatoid arthritis"), ("M05.9", "rheumatoid arthritis")]),
    ("J45", &[("J45.0", "allergic asthma"), ("J45.9", "asthma, unspecified")]),
];

const COMORBIDITIES: [(&str, &str); 2] = [("E11.9", "type 2 diabetes"), ("I10", "essential hypertension")];

const DRUGS: [(&str, HormoneClass, f64); 11] = [
    ("hydrocortisone", HormoneClass::ShortActing, 0.25),
    ("cortisone", HormoneClass::ShortActing, 0.2),
    ("prednisone", HormoneClass::MediumActing, 1.0),
    ("prednisolone", HormoneClass::MediumActing, 1.0),
    ("methylprednisolone", HormoneClass::MediumActing, 1.25),
    ("triamcinolone", HormoneClass::MediumActing, 1.25),
    ("dexamethasone", HormoneClass::LongActing, 6.67),
    ("betamethasone", HormoneClass::LongActing, 8.33),
    ("calcium_carbonate", HormoneClass::NonHormone, 0.0),
    ("omeprazole", HormoneClass::NonHormone, 0.0),
    ("alendronate", HormoneClass::NonHormone, 0.0),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskSpec {
    pub rng_seed: u64,
    pub n_patients: usize,
    #[serde(default = "default_base_rate")]
    pub base_rate: f64,
    /// Overrides `base_rate` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_prevalence: Option<f64>,
    /// Log-odds weight per entry of [`RISK_FEATURES`]; absent means 0.
    #[serde(default)]
    pub coefficients: BTreeMap<String, f64>,
    #[serde(default)]
    pub latency_days: i64,
    #[serde(default)]
    pub confounder_strength: f64,
}

fn default_base_rate() -> f64 {
    0.1
}

impl RiskSpec {
    pub fn null(rng_seed: u64, n_patients: usize, base_rate: f64) -> Self {
        RiskSpec {
            rng_seed,
            n_patients,
            base_rate,
            target_prevalence: None,
            coefficients: BTreeMap::new(),
            latency_days: 30,
            confounder_strength: 0.0,
        }
    }

    pub fn with_target_prevalence(mut self, target: f64) -> Self {
        self.target_prevalence = Some(target);
        self
    }

    pub fn with_coefficient(mut self, feature: &str, value: f64) -> Self {
        self.coefficients.insert(feature.to_string(), value);
        self
    }

    fn coefficient(&self, feature: &str) -> f64 {
        self.coefficients.get(feature).copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if self.n_patients == 0 {
            return Err(SpecError::Invalid("n_patients > 0".into()));
        }
        match self.target_prevalence {
            Some(t) if !(t > 0.0 && t < 1.0) => return Err(SpecError::Invalid("0 < target_prevalence < 1".into())),
            None if !(self.base_rate > 0.0 && self.base_rate < 1.0) => {
                return Err(SpecError::Invalid("0 < base_rate < 1".into()))
            }
            _ => {}
        }
        if self.latency_days < 0 {
            return Err(SpecError::Invalid("latency_days >= 0".into()));
        }
        if !self.confounder_strength.is_finite() {
            return Err(SpecError::Invalid("confounder_strength finite".into()));
        }
        for (name, value) in &self.coefficients {
            if !RISK_FEATURES.contains(&name.as_str()) {
                return Err(SpecError::UnknownFeature(name.clone()));
            }
            if !value.is_finite() {
                return Err(SpecError::Invalid(format!("coefficient {name} finite")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SpecError {
    #[error("invalid risk spec: {0}")]
    Invalid(String),
    #[error("unknown risk feature {0:?}; expected one of {RISK_FEATURES:?}")]
    UnknownFeature(String),
}

/// Per-patient generator manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub patient_id: String,
    pub probability: f64,
    pub label: bool,
    /// Risk feature values in [`RISK_FEATURES`] order.
    pub features: Vec<f64>,
    /// Prednisone-equivalent cumulative dose (mg) per hormone class.
    pub cum_dose_mg: [f64; 3],
    /// Primary-disease category the patient was assigned.
    pub disease: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: RiskSpec,
    pub feature_names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub rows: Vec<TruthRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectSign {
    Positive,
    Negative,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthReport {
    pub n_patients: usize,
    pub positives: usize,
    pub prevalence: f64,
    /// `None` when the drawn labels contain a single class.
    pub true_auc: Option<f64>,
    pub auc_undefined: bool,
    pub effect_signs: BTreeMap<String, EffectSign>,
}

pub fn drug_dictionary() -> DrugDictionary {
    DRUGS
        .iter()
        .map(|&(name, class, factor)| (name.to_string(), DrugInfo { class, prednisone_factor: factor }))
        .collect()
}

pub fn disease_prefixes() -> Vec<&'static str> {
    DISEASES.iter().map(|(p, _)| *p).collect()
}

/// Generates a corpus and the matching ground truth. Deterministic in
/// `spec.rng_seed`.
pub fn generate_corpus(spec: &RiskSpec) -> Result<(Corpus, GroundTruth), SpecError> {
    spec.validate()?;
    let dictionary = drug_dictionary();
    let coefficients: Vec<f64> = RISK_FEATURES.iter().map(|f| spec.coefficient(f)).collect();
    let width = spec.n_patients.saturating_sub(1).to_string().len().max(5);

    let unlabeled: Vec<(PatientRecord, TruthRow)> = (0..spec.n_patients)
        .into_par_iter()
        .map(|i| generate_patient(spec, i, width))
        .collect();
    let scores: Vec<f64> = unlabeled
        .iter()
        .map(|(_, row)| row.features.iter().zip(&coefficients).map(|(x, b)| x * b).sum())
        .collect();
    let intercept = match spec.target_prevalence {
        Some(target) => calibrate_intercept(&scores, target),
        None => stats::logit(spec.base_rate),
    };
    let generated: Vec<(PatientRecord, TruthRow)> = unlabeled
        .into_par_iter()
        .zip(scores)
        .enumerate()
        .map(|(i, ((record, row), score))| assign_outcome(spec, i, record, row, intercept + score))
        .collect();

    let mut patients = BTreeMap::new();
    let mut rows = Vec::with_capacity(generated.len());
    for (record, row) in generated {
        patients.insert(record.patient_id.clone(), record);
        rows.push(row);
    }
    let corpus = Corpus { schema_version: CORPUS_SCHEMA_VERSION.to_string(), drug_dictionary: dictionary, patients };
    let truth = GroundTruth {
        spec: spec.clone(),
        feature_names: RISK_FEATURES.iter().map(|s| s.to_string()).collect(),
        coefficients,
        intercept,
        rows,
    };
    Ok((corpus, truth))
}

fn uniform_secs(rng: &mut ChaCha8Rng, lo: Timestamp, hi: Timestamp) -> Timestamp {
    Timestamp(rng.random_range(lo.0..=hi.0))
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T]) -> &'a T {
    &items[rng.random_range(0..items.len())]
}

/// Intercept `a` with mean σ(a + score) equal to `target`, by bisection.
pub fn calibrate_intercept(scores: &[f64], target: f64) -> f64 {
    let mean_risk = |a: f64| scores.iter().map(|s| stats::logistic(a + s)).sum::<f64>() / scores.len().max(1) as f64;
    let (mut lo, mut hi) = (-60.0, 60.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_risk(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn generate_patient(spec: &RiskSpec, index: usize, width: usize) -> (PatientRecord, TruthRow) {
    let mut rng = seed::rng_for(spec.rng_seed, "patient", index as u64);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

    let activity: f64 = rng.random();
    let age = (35.0 + 25.0 * activity + 12.0 * std_normal.sample(&mut rng)).round().clamp(18.0, 90.0) as u32;
    let gender = match rng.random::<f64>() {
        u if u < 0.6 => Gender::Female,
        u if u < 0.98 => Gender::Male,
        _ => Gender::Other,
    };

    let disease_idx = rng.random_range(0..DISEASES.len());
    let uses_hormones = rng.random_bool(0.85);
    let class_weights: [f64; 3] = [rng.random(), rng.random(), rng.random()];
    let intensity = (spec.confounder_strength * (activity - 0.5) + 0.3 * std_normal.sample(&mut rng)).exp();

    let epoch = Timestamp::parse("2012-01-01T00:00:00Z").expect("fixed epoch");
    let mut cursor = epoch.plus_days(rng.random_range(0..5 * 365)).plus_secs(rng.random_range(6 * 3600..18 * 3600));
    let n_admissions = rng.random_range(1..=5);
    let mut admissions = Vec::with_capacity(n_admissions);
    for ai in 0..n_admissions {
        if ai > 0 {
            cursor = cursor.plus_days(rng.random_range(14..=365));
        }
        let admit = cursor;
        let discharge = admit.plus_days(rng.random_range(3..=30));
        cursor = discharge;
        admissions.push(generate_admission(&mut rng, admit, discharge, disease_idx, uses_hormones, &class_weights, intensity, activity));
    }

    let record_id = format!("SYN-{index:0width$}");
    let record = PatientRecord {
        patient_id: record_id.clone(),
        age,
        gender,
        admissions,
        outcome: OutcomeLabel { has_sequela: false, onset_time: None },
    };

    let cum_dose_mg = record.cumulative_dose_by_class();
    let features = vec![
        cum_dose_mg[0] / 1000.0,
        cum_dose_mg[1] / 1000.0,
        cum_dose_mg[2] / 1000.0,
        (f64::from(age) - 18.0) / 40.0,
        activity,
    ];
    let row = TruthRow {
        patient_id: record_id,
        probability: f64::NAN,
        label: false,
        features,
        cum_dose_mg,
        disease: DISEASES[disease_idx].0.to_string(),
    };
    (record, row)
}

/// Draws the label from the patient's own outcome stream, so it depends on
/// the planted model only through the Bernoulli threshold.
fn assign_outcome(spec: &RiskSpec, index: usize, mut record: PatientRecord, mut row: TruthRow, log_odds: f64) -> (PatientRecord, TruthRow) {
    let probability = stats::logistic(log_odds);
    let mut outcome_rng = seed::rng_for(spec.rng_seed, "outcome", index as u64);
    let threshold: f64 = outcome_rng.random();
    let extra_days: i64 = outcome_rng.random_range(0..=365);
    let label = threshold < probability;
    if label {
        let anchor = record
            .first_hormone_exposure()
            .or(record.first_admit())
            .expect("at least one admission");
        record.outcome = OutcomeLabel {
            has_sequela: true,
            onset_time: Some(anchor.plus_days(spec.latency_days + extra_days)),
        };
    }
    row.probability = probability;
    row.label = label;
    (record, row)
}

#[allow(clippy::too_many_arguments)]
fn generate_admission(
    rng: &mut ChaCha8Rng,
    admit: Timestamp,
    discharge: Timestamp,
    disease_idx: usize,
    uses_hormones: bool,
    class_weights: &[f64; 3],
    intensity: f64,
    activity: f64,
) -> AdmissionEpisode {
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

    let cluster = if rng.random_bool(0.85) { disease_idx } else { rng.random_range(0..DISEASES.len()) };
    let (code, text) = *pick(rng, DISEASES[cluster].1);
    let mut diagnoses = vec![Diagnosis { code: code.into(), text: text.into(), is_primary: true }];
    if rng.random_bool(0.2) {
        let (code, text) = *pick(rng, &COMORBIDITIES);
        diagnoses.push(Diagnosis { code: code.into(), text: text.into(), is_primary: false });
    }

    let mut orders = Vec::new();
    if uses_hormones {
        let n = Poisson::new(1.5 * intensity).map(|p| p.sample(rng) as usize).unwrap_or(0);
        let course = LogNormal::new(150f64.ln(), 0.6).expect("valid lognormal");
        let total_weight: f64 = class_weights.iter().sum();
        for _ in 0..n {
            let mut u = rng.random::<f64>() * total_weight;
            let mut class_idx = 2;
            for (ci, w) in class_weights.iter().enumerate() {
                if u < *w {
                    class_idx = ci;
                    break;
                }
                u -= w;
            }
            let class = HormoneClass::HORMONES[class_idx];
            let candidates: Vec<&(&str, HormoneClass, f64)> = DRUGS.iter().filter(|d| d.1 == class).collect();
            let &&(name, _, factor) = pick(rng, &candidates);
            let equivalent = intensity * course.sample(rng);
            let ordered = ((equivalent / factor) * 2.0).round().max(1.0) / 2.0;
            orders.push(MedicationOrder {
                drug_name: name.into(),
                hormone_class: class,
                dose: ordered * factor,
                ordered_dose: ordered,
                route: if rng.random_bool(0.6) { "po".into() } else { "iv".into() },
                order_time: uniform_secs(rng, admit, discharge),
            });
        }
    }
    for _ in 0..rng.random_range(0..=2) {
        let &(name, class, factor) = pick(rng, &DRUGS[8..]);
        let ordered = f64::from(rng.random_range(1..=20u32)) * 50.0;
        orders.push(MedicationOrder {
            drug_name: name.into(),
            hormone_class: class,
            dose: ordered * factor,
            ordered_dose: ordered,
            route: "po".into(),
            order_time: uniform_secs(rng, admit, discharge),
        });
    }
    orders.sort_by_key(|o| o.order_time);

    let mut labs = Vec::new();
    for name in CANONICAL_LABS {
        if !rng.random_bool(0.75) {
            continue;
        }
        for _ in 0..rng.random_range(1..=2) {
            let (value, unit, lo, hi) = match name {
                "crp" => ((2.0 + 30.0 * activity + 4.0 * std_normal.sample(rng)).max(0.1), "mg/L", 0.0, 10.0),
                "alp" => ((90.0 + 25.0 * std_normal.sample(rng)).max(10.0), "U/L", 40.0, 150.0),
                _ => ((1.4 + 0.5 * std_normal.sample(rng)).max(0.2), "mmol/L", 0.4, 1.7),
            };
            labs.push(LabTest {
                test_name: name.into(),
                value: (value * 100.0).round() / 100.0,
                unit: unit.into(),
                reference_low: Some(lo),
                reference_high: Some(hi),
                sample_time: uniform_secs(rng, admit, discharge),
            });
        }
    }
    labs.sort_by_key(|l| l.sample_time);

    let mut exams = Vec::new();
    for _ in 0..rng.random_range(0..=2) {
        let name = *pick(rng, &CANONICAL_EXAMS);
        let (flag, report) = match rng.random::<f64>() {
            u if u < 0.15 => (ResultFlag::Abnormal, "focal signal abnormality reported"),
            u if u < 0.20 => (ResultFlag::Unknown, "study incomplete"),
            _ => (ResultFlag::Normal, "no acute findings"),
        };
        exams.push(Examination {
            exam_name: name.into(),
            result_flag: flag,
            report_text: format!("{name}: {report}"),
            exam_time: uniform_secs(rng, admit, discharge),
        });
    }
    exams.sort_by_key(|e| e.exam_time);

    let notes = vec![
        MedicalNote { time: admit.plus_secs(3600.min((discharge.0 - admit.0) / 2)), text: format!("Admitted for {text}.") },
        MedicalNote { time: discharge, text: "Discharged in stable condition.".into() },
    ];

    AdmissionEpisode {
        admit_time: admit,
        discharge_time: discharge,
        diagnoses,
        lab_tests: labs,
        examinations: exams,
        medication_orders: orders,
        medical_notes: notes,
    }
}

pub fn ground_truth_report(gt: &GroundTruth) -> GroundTruthReport {
    let n = gt.rows.len();
    let positives = gt.rows.iter().filter(|r| r.label).count();
    let scores: Vec<f64> = gt.rows.iter().map(|r| r.probability).collect();
    let labels: Vec<bool> = gt.rows.iter().map(|r| r.label).collect();
    let true_auc = stats::auc(&scores, &labels);
    let effect_signs = gt
        .feature_names
        .iter()
        .zip(&gt.coefficients)
        .map(|(name, &b)| {
            let sign = if b > 0.0 {
                EffectSign::Positive
            } else if b < 0.0 {
                EffectSign::Negative
            } else {
                EffectSign::None
            };
            (name.clone(), sign)
        })
        .collect();
    GroundTruthReport {
        n_patients: n,
        positives,
        prevalence: if n == 0 { 0.0 } else { positives as f64 / n as f64 },
        true_auc,
        auc_undefined: true_auc.is_none(),
        effect_signs,
    }
}
